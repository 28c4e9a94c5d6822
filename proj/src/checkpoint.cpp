#include "symkan/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <json.hpp>

#include "symkan/errors.hpp"
#include "symkan/io.hpp"

namespace symkan {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian");

namespace {

constexpr char kMagic[8] = {'S', 'Y', 'M', 'K', 'A', 'N', 'C', 'K'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string context) : b_(bytes), ctx_(std::move(context)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  void set_context(std::string c) { ctx_ = std::move(c); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw LoadError("truncated checkpoint (" + ctx_ + ")");
  }
  const std::string& b_;
  std::string ctx_;
  std::size_t pos_ = 0;
};

}  // namespace

void checkpoint_save(const std::filesystem::path& path, const Network& net,
                     std::span<const LearnableScalar> learnables, std::int64_t step,
                     const std::string& config_text) {
  const auto& cfg = net.config();
  nlohmann::json meta;
  meta["n_inputs"] = cfg.n_inputs;
  meta["n_outputs"] = cfg.n_outputs;
  meta["units"] = cfg.units;
  meta["edges"] = cfg.edges;
  meta["library"] = cfg.library;
  meta["unit_gates"] = cfg.unit_gates;
  meta["rho"] = cfg.rho;
  meta["seed"] = cfg.seed;
  auto& aff = meta["input_affine"] = nlohmann::json::array();
  for (const auto& a : cfg.input_affine) aff.push_back({{"scale", a.scale}, {"shift", a.shift}});
  auto& hard = meta["hardening"] = nlohmann::json::array();
  for (const auto& h : net.hardening_states()) {
    hard.push_back({{"hardened", h.hardened}, {"pruned", h.pruned}, {"edge", h.edge}, {"primitive", h.primitive}});
  }
  auto& lv = meta["learnables"] = nlohmann::json::array();
  for (const auto& l : learnables) {
    nlohmann::json j{{"name", l.name}, {"trainable", l.trainable}, {"init", l.init}};
    j["truth"] = std::isnan(l.truth) ? nlohmann::json(nullptr) : nlohmann::json(l.truth);
    lv.push_back(std::move(j));
  }
  meta["step"] = step;
  meta["config"] = config_text;
  const std::string meta_text = meta.dump();

  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, meta_text.size());
  out += meta_text;
  const auto& p = net.params();
  put<std::uint64_t>(out, p.size() + learnables.size());
  for (double v : p) put(out, v);
  for (const auto& l : learnables) put(out, l.value);
  put<std::uint64_t>(out, fnv1a(out));
  write_file_atomic(path, out);
}

CheckpointState checkpoint_load(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  Reader r(bytes, "no header");
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw LoadError(path.string() + " is not a checkpoint file");
  }
  r.bytes(sizeof kMagic);
  const auto version = r.get<std::uint32_t>();
  const std::string vtag = "version " + std::to_string(version);
  r.set_context(vtag);
  if (version != kCheckpointVersion) {
    throw LoadError("unsupported checkpoint " + vtag + " (expected version " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  const auto meta_len = r.get<std::uint64_t>();
  const std::string meta_text = r.bytes(static_cast<std::size_t>(std::min<std::uint64_t>(meta_len, bytes.size())));
  const auto count = r.get<std::uint64_t>();
  if (count > bytes.size() / sizeof(double)) throw LoadError("truncated checkpoint (" + vtag + ")");
  std::vector<double> values(static_cast<std::size_t>(count));
  for (auto& v : values) v = r.get<double>();
  const std::size_t body = r.pos();
  const auto checksum = r.get<std::uint64_t>();
  if (r.pos() != bytes.size()) throw LoadError("trailing bytes in checkpoint (" + vtag + ")");
  if (checksum != fnv1a(std::string_view(bytes.data(), body))) {
    throw LoadError("checkpoint checksum mismatch (" + vtag + ")");
  }

  CheckpointState st;
  try {
    const auto meta = nlohmann::json::parse(meta_text);
    NetworkConfig cfg;
    cfg.n_inputs = meta.at("n_inputs").get<int>();
    cfg.n_outputs = meta.at("n_outputs").get<int>();
    cfg.units = meta.at("units").get<std::vector<int>>();
    cfg.edges = meta.at("edges").get<int>();
    cfg.library = meta.at("library").get<std::vector<std::string>>();
    cfg.unit_gates = meta.at("unit_gates").get<bool>();
    cfg.rho = meta.at("rho").get<double>();
    cfg.seed = meta.at("seed").get<std::uint64_t>();
    for (const auto& a : meta.at("input_affine")) {
      cfg.input_affine.push_back({a.at("scale").get<double>(), a.at("shift").get<double>()});
    }
    st.net = Network(cfg, library_subset(cfg.library));

    const auto& hard = meta.at("hardening");
    auto& states = st.net.hardening_states();
    if (hard.size() != states.size()) throw LoadError("hardening record does not match the architecture");
    for (std::size_t i = 0; i < states.size(); ++i) {
      states[i].hardened = hard[i].at("hardened").get<bool>();
      states[i].pruned = hard[i].at("pruned").get<bool>();
      states[i].edge = hard[i].at("edge").get<int>();
      states[i].primitive = hard[i].at("primitive").get<int>();
      if (states[i].edge < 0 || states[i].edge >= cfg.edges || states[i].primitive < 0 ||
          states[i].primitive >= static_cast<int>(cfg.library.size())) {
        throw LoadError("hardening record out of range");
      }
    }
    for (const auto& l : meta.at("learnables")) {
      LearnableScalar s;
      s.name = l.at("name").get<std::string>();
      s.trainable = l.at("trainable").get<bool>();
      s.init = l.at("init").get<double>();
      if (!l.at("truth").is_null()) s.truth = l.at("truth").get<double>();
      st.learnables.push_back(std::move(s));
    }
    st.step = meta.at("step").get<std::int64_t>();
    st.config_text = meta.at("config").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed checkpoint metadata (" + vtag + "): " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError("invalid network in checkpoint (" + vtag + "): " + e.what());
  }

  auto& p = st.net.params();
  if (values.size() != p.size() + st.learnables.size()) {
    throw LoadError("parameter count mismatch in checkpoint (" + vtag + ")");
  }
  std::copy(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(p.size()), p.begin());
  for (std::size_t i = 0; i < st.learnables.size(); ++i) st.learnables[i].value = values[p.size() + i];
  return st;
}

}  // namespace symkan
