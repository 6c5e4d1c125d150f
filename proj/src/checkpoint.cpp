#include "ngcl/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <vector>

namespace ngcl {
namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <class U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void tensor(const Tensor& t) {
    uint<std::uint64_t>(t.rows());
    uint<std::uint64_t>(t.cols());
    for (double v : t.data()) f64(v);
  }
  void tensors(const std::vector<const Tensor*>& ts) {
    uint<std::uint32_t>(static_cast<std::uint32_t>(ts.size()));
    for (const Tensor* t : ts) tensor(*t);
  }
  void section(const char tag[4], const std::string& payload) {
    bytes(tag, 4);
    uint<std::uint64_t>(payload.size());
    out_ += payload;
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& s, std::uint64_t base) : s_(s), base_(base) {}
  std::uint64_t offset() const { return base_ + pos_; }
  bool done() const { return pos_ == s_.size(); }
  void need(std::size_t n, const char* what) {
    if (s_.size() - pos_ < n) throw CheckpointError(std::string("truncated checkpoint while reading ") + what, offset());
  }
  std::string raw(std::size_t n, const char* what) {
    need(n, what);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  template <class U>
  U uint(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(uint<std::uint64_t>(what)); }
  Tensor tensor() {
    const auto rows = uint<std::uint64_t>("tensor rows");
    const auto cols = uint<std::uint64_t>("tensor cols");
    if (rows > (1u << 24) || cols > (1u << 24) || (rows * cols) > (s_.size() - pos_) / 8)
      throw CheckpointError("tensor shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                                " exceeds section size",
                            offset());
    std::vector<double> data(rows * cols);
    for (double& v : data) v = f64("tensor data");
    return Tensor(rows, cols, std::move(data));
  }
  std::vector<Tensor> tensors() {
    const auto n = uint<std::uint32_t>("tensor count");
    std::vector<Tensor> out;
    for (std::uint32_t i = 0; i < n; ++i) out.push_back(tensor());
    return out;
  }

 private:
  const std::string& s_;
  std::uint64_t base_;
  std::size_t pos_ = 0;
};

std::string opt_payload(const OptState& s) {
  Writer w;
  w.uint<std::uint64_t>(s.step);
  std::vector<const Tensor*> ts;
  for (const auto& t : s.velocity) ts.push_back(&t);
  w.tensors(ts);
  return w.take();
}

OptState read_opt(Reader& r) {
  OptState s;
  s.step = r.uint<std::uint64_t>("optimizer step");
  s.velocity = r.tensors();
  return s;
}

}  // namespace

std::string encode_checkpoint(const TrainState& state, const std::string& config_json) {
  const Model& m = state.model;
  Writer meta;
  meta.uint<std::uint64_t>(state.epochs_done);
  meta.uint<std::uint8_t>(m.encoder.nonneg_output ? 1 : 0);
  meta.uint<std::uint32_t>(static_cast<std::uint32_t>(m.encoder.layers.size()));
  meta.uint<std::uint32_t>(static_cast<std::uint32_t>(m.gate.layers.size()));
  Writer parm;
  parm.tensors(m.parameters());

  Writer w;
  w.bytes("NGCL", 4);
  w.uint<std::uint16_t>(kCheckpointVersion);
  w.section("CONF", config_json);
  w.section("META", meta.take());
  w.section("PARM", parm.take());
  w.section("OPTE", opt_payload(state.encoder_opt));
  w.section("OPTG", opt_payload(state.gate_opt));
  return w.take();
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state, const std::string& config_json) {
  const std::string bytes = encode_checkpoint(state, config_json);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes, 0);
  if (r.raw(4, "magic") != "NGCL") throw CheckpointError("bad magic, not a checkpoint", 0);
  const auto version = r.uint<std::uint16_t>("version");
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported version " + std::to_string(version) + " (expected " +
                              std::to_string(kCheckpointVersion) + ")",
                          4);

  Checkpoint ck;
  bool have_conf = false, have_meta = false, have_parm = false;
  std::uint32_t enc_layers = 0, gate_layers = 0;
  bool nonneg = true;
  std::vector<Tensor> params;
  while (!r.done()) {
    const std::uint64_t at = r.offset();
    const std::string tag = r.raw(4, "section tag");
    const auto len = r.uint<std::uint64_t>("section length");
    const std::uint64_t body_at = r.offset();
    if (len > bytes.size()) throw CheckpointError("section " + tag + " length exceeds file", body_at);
    const std::string body = r.raw(static_cast<std::size_t>(len), "section body");
    Reader s(body, body_at);
    if (tag == "CONF") {
      ck.config_json = body;
      have_conf = true;
      continue;
    } else if (tag == "META") {
      ck.state.epochs_done = s.uint<std::uint64_t>("epochs");
      nonneg = s.uint<std::uint8_t>("nonneg flag") != 0;
      enc_layers = s.uint<std::uint32_t>("encoder layer count");
      gate_layers = s.uint<std::uint32_t>("gate layer count");
      have_meta = true;
    } else if (tag == "PARM") {
      params = s.tensors();
      have_parm = true;
    } else if (tag == "OPTE") {
      ck.state.encoder_opt = read_opt(s);
    } else if (tag == "OPTG") {
      ck.state.gate_opt = read_opt(s);
    } else {
      throw CheckpointError("unknown section '" + tag + "'", at);
    }
    if (!s.done()) throw CheckpointError("trailing bytes in section " + tag, s.offset());
  }
  if (!have_conf || !have_meta || !have_parm) throw CheckpointError("missing required section", r.offset());
  if (params.size() != 2 * (enc_layers + gate_layers) || enc_layers == 0)
    throw CheckpointError("parameter count does not match layer counts", r.offset());

  Model& m = ck.state.model;
  m.encoder.nonneg_output = nonneg;
  for (std::uint32_t i = 0; i < enc_layers + gate_layers; ++i) {
    Layer l{std::move(params[2 * i]), std::move(params[2 * i + 1])};
    if (l.b.rows() != 1 || l.b.cols() != l.W.cols())
      throw CheckpointError("bias shape does not match weight in layer " + std::to_string(i), r.offset());
    (i < enc_layers ? m.encoder.layers : m.gate.layers).push_back(std::move(l));
  }
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string(), 0);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace ngcl
