#include <gtest/gtest.h>

#include <string>

#include "json.hpp"
#include "ngcl/config.hpp"

using namespace ngcl;

namespace {

std::string error_path(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<no error>";
}

}  // namespace

TEST(Config, Defaults) {
  const RunConfig c = parse_run_config("{}");
  EXPECT_EQ(c.method, Method::bayesncl_ste);
  EXPECT_EQ(c.model.K(), 32u);
  EXPECT_EQ(c.model.widths.front(), c.data.synthetic.d);
  EXPECT_EQ(c.model.strategy.kind, MaskKind::ste);
  EXPECT_DOUBLE_EQ(c.train.lambda, 3e-5);
  EXPECT_DOUBLE_EQ(c.train.rho, 0.8);
  EXPECT_FALSE(c.train.normalize);
  EXPECT_EQ(c.data.kind, DataKind::synthetic);
}

TEST(Config, UnknownKeyNamesPath) {
  EXPECT_EQ(error_path(R"({"train":{"epoch":3}})"), "train.epoch");
  EXPECT_EQ(error_path(R"({"bogus":1})"), "bogus");
  EXPECT_EQ(error_path(R"({"data":{"synthetic":{"dd":3}}})"), "data.synthetic.dd");
}

TEST(Config, WrongTypeNamesPath) {
  EXPECT_EQ(error_path(R"({"train":{"epochs":"many"}})"), "train.epochs");
  EXPECT_EQ(error_path(R"({"train":{"epochs":-1}})"), "train.epochs");
  EXPECT_EQ(error_path(R"({"objective":{"normalize":1}})"), "objective.normalize");
  EXPECT_EQ(error_path(R"({"model":{"hidden":[64,"x"]}})"), "model.hidden[1]");
}

TEST(Config, RangeChecks) {
  EXPECT_EQ(error_path(R"({"objective":{"rho":1.0}})"), "objective.rho");
  EXPECT_EQ(error_path(R"({"objective":{"tau":0}})"), "objective.tau");
  EXPECT_EQ(error_path(R"({"train":{"batch_size":1}})"), "train.batch_size");
  EXPECT_EQ(error_path(R"({"model":{"gate_depth":4}})"), "model.gate_depth");
  EXPECT_EQ(error_path(R"({"model":{"method":"vae"}})"), "model.method");
  EXPECT_EQ(error_path(R"({"train":{"optimizer":"adam"}})"), "train.optimizer");
  EXPECT_EQ(error_path(R"({"data":{"kind":"cifar10"}})"), "data.cifar10.dir");
  EXPECT_EQ(error_path(R"({"model":{"K":8},"eval":{"retrieval":{"dims":9}}})"), "eval.retrieval.dims");
}

TEST(Config, InvalidJson) {
  try {
    parse_run_config("{\"train\":");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "");
    EXPECT_NE(std::string(e.what()).find("invalid JSON"), std::string::npos);
  }
}

TEST(Config, CanonicalJsonIsStable) {
  const RunConfig a = parse_run_config(R"({"train":{"seed":4,"epochs":2},"model":{"K":16}})");
  const RunConfig b = parse_run_config(R"({"model":{"K":16},"train":{"epochs":2,"seed":4}})");
  EXPECT_EQ(canonical_json(a), canonical_json(b));
  // a canonical dump parses back to itself
  EXPECT_EQ(canonical_json(parse_run_config(canonical_json(a))), canonical_json(a));
  EXPECT_NE(canonical_json(a), canonical_json(parse_run_config("{}")));
}

TEST(Config, DefaultJsonRoundTrip) {
  const std::string text = default_config_json();
  EXPECT_NO_THROW(nlohmann::json::parse(text));
  EXPECT_EQ(canonical_json(parse_run_config(text)), canonical_json(parse_run_config("{}")));
}

TEST(Config, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST(Config, MethodSelectsStrategy) {
  struct Case {
    const char* name;
    MaskKind kind;
    bool nonneg;
  };
  for (const Case& c : {Case{"cl", MaskKind::none, false}, Case{"ncl", MaskKind::none, true},
                        Case{"ncl_topk", MaskKind::topk, true}, Case{"bayesncl_ste", MaskKind::ste, true},
                        Case{"bayesncl_gs", MaskKind::gumbel_sigmoid, true},
                        Case{"bayesncl_soft", MaskKind::soft, true}}) {
    const RunConfig r = parse_run_config(std::string(R"({"model":{"method":")") + c.name + "\"}}");
    EXPECT_EQ(r.model.strategy.kind, c.kind) << c.name;
    EXPECT_EQ(r.model.nonneg, c.nonneg) << c.name;
    EXPECT_EQ(method_name(method_of(r.model)), c.name);
    EXPECT_EQ(method_name(parse_method(c.name)), c.name);
  }
}

TEST(Config, HiddenWidthsBuildEncoder) {
  const RunConfig r = parse_run_config(R"({"data":{"synthetic":{"d":20}},"model":{"hidden":[10,12],"K":6}})");
  EXPECT_EQ(r.model.widths, (std::vector<std::size_t>{20, 10, 12, 6}));
}
