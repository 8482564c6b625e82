#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "adnl/trainer.hpp"

namespace adnl {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr std::size_t kMagicSize = sizeof(kCheckpointMagic) - 1;

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  void tensor(const Tensor& t) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) pod<std::int32_t>(d);
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data());
    bytes.insert(bytes.end(), p, p + t.size() * sizeof(float));
  }
  void snapshot(const ParameterSnapshot& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    for (const auto& [name, t] : s) {
      str(name);
      tensor(t);
    }
  }

  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, p_, sizeof(T));
    p_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
  }
  Tensor tensor() {
    const auto rank = pod<std::uint32_t>();
    if (rank > 8) throw CheckpointError("checkpoint: implausible tensor rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(pod<std::int32_t>());
      if (shape.back() < 0) throw CheckpointError("checkpoint: negative tensor dimension");
    }
    Tensor t(shape);
    need(t.size() * sizeof(float));
    std::memcpy(t.data(), p_, t.size() * sizeof(float));
    p_ += t.size() * sizeof(float);
    return t;
  }
  ParameterSnapshot snapshot() {
    ParameterSnapshot s(pod<std::uint32_t>());
    for (auto& [name, t] : s) {
      name = str();
      t = tensor();
    }
    return s;
  }
  bool done() const { return p_ == end_; }

 private:
  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end_ - p_) < n) throw CheckpointError("checkpoint: record runs past the payload");
  }
  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

std::string config_text(const TrainingConfig& config) {
  std::string out;
  for (const auto& [k, v] : config.to_key_values()) out += k + " = " + v + "\n";
  return out;
}

TrainingConfig parse_config_text(const std::string& text) {
  TrainingConfig config;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    if (!config.set(line.substr(0, eq), line.substr(eq + 3))) {
      throw CheckpointError("checkpoint: unknown config key '" + line.substr(0, eq) + "'");
    }
  }
  return config;
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

void save_checkpoint(const TrainState& state, const TrainingConfig& config, const std::filesystem::path& path,
                     const std::string& extra) {
  Writer w;
  w.bytes.assign(kCheckpointMagic, kCheckpointMagic + kMagicSize);
  w.str(config_text(config));
  w.str(extra);
  w.pod<std::int32_t>(state.epoch);
  std::ostringstream rng;
  rng << state.rng;
  w.str(rng.str());
  w.pod<std::uint8_t>(state.deterministic ? 1 : 0);
  w.pod<std::uint64_t>(state.reads.train_normal);
  w.pod<std::uint64_t>(state.reads.train_abnormal);
  w.pod<std::uint64_t>(state.reads.validation);

  w.pod<std::uint32_t>(static_cast<std::uint32_t>(state.auc_history.size()));
  for (const auto& [epoch, auc] : state.auc_history) {
    w.pod<std::int32_t>(epoch);
    w.pod<double>(auc);
  }
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(state.log.size()));
  for (const auto& r : state.log) {
    w.pod<std::int32_t>(r.epoch);
    for (double v : {r.positive_loss, r.negative_loss, r.discriminator_loss, r.generator_loss, r.validation_auc}) {
      w.pod<double>(v);
    }
    w.pod<std::int32_t>(r.normal_batches);
    w.pod<std::int32_t>(r.abnormal_batches);
  }

  // snapshot() is non-const only because it walks the layer tree.
  w.snapshot(const_cast<AdversarialAutoencoder&>(state.model).snapshot());
  w.pod<std::int32_t>(state.best.epoch);
  w.pod<double>(state.best.auc);
  w.snapshot(state.best.params);

  const Adam* optimizers[] = {&state.reconstruction_optimizer, &state.generator_optimizer,
                              &state.discriminator_optimizer};
  w.pod<std::uint32_t>(3);
  for (const Adam* opt : optimizers) {
    w.str(opt->name());
    w.pod<std::int64_t>(opt->steps());
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(opt->moments().size()));
    for (const auto& m : opt->moments()) {
      w.str(m.param);
      w.tensor(m.first);
      w.tensor(m.second);
    }
  }
  w.pod<std::uint32_t>(crc_of(w.bytes.data(), w.bytes.size()));

  // Write to a sibling and rename, so an interrupted save leaves the old file.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(w.bytes.data()), static_cast<std::streamsize>(w.bytes.size()));
    if (!out) throw CheckpointError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() >= kMagicSize && std::memcmp(bytes.data(), kCheckpointMagic, kMagicSize) != 0) {
    throw CheckpointVersionError(path.string() + ": not an ADNL1 checkpoint (unknown magic or version)");
  }
  if (bytes.size() < kMagicSize + sizeof(std::uint32_t)) {
    throw CheckpointChecksumError(path.string() + ": truncated checkpoint");
  }
  const std::size_t body = bytes.size() - sizeof(std::uint32_t);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, sizeof stored);
  if (stored != crc_of(bytes.data(), body)) {
    throw CheckpointChecksumError(path.string() + ": checksum mismatch (corrupt or truncated checkpoint)");
  }

  Reader r(bytes.data() + kMagicSize, body - kMagicSize);
  TrainingConfig config = parse_config_text(r.str());
  std::string extra = r.str();
  LoadedCheckpoint out{config, TrainState(config), std::move(extra)};
  TrainState& s = out.state;

  s.epoch = r.pod<std::int32_t>();
  std::istringstream rng(r.str());
  rng >> s.rng;
  if (!rng) throw CheckpointError("checkpoint: bad rng state");
  s.deterministic = r.pod<std::uint8_t>() != 0;
  s.reads.train_normal = r.pod<std::uint64_t>();
  s.reads.train_abnormal = r.pod<std::uint64_t>();
  s.reads.validation = r.pod<std::uint64_t>();

  s.auc_history.resize(r.pod<std::uint32_t>());
  for (auto& [epoch, auc] : s.auc_history) {
    epoch = r.pod<std::int32_t>();
    auc = r.pod<double>();
  }
  s.log.resize(r.pod<std::uint32_t>());
  for (auto& row : s.log) {
    row.epoch = r.pod<std::int32_t>();
    for (double* v : {&row.positive_loss, &row.negative_loss, &row.discriminator_loss, &row.generator_loss,
                      &row.validation_auc}) {
      *v = r.pod<double>();
    }
    row.normal_batches = r.pod<std::int32_t>();
    row.abnormal_batches = r.pod<std::int32_t>();
  }

  try {
    s.model.restore(r.snapshot());
    s.best.epoch = r.pod<std::int32_t>();
    s.best.auc = r.pod<double>();
    s.best.params = r.snapshot();

    const auto count = r.pod<std::uint32_t>();
    if (count != 3) throw CheckpointError("checkpoint: expected 3 optimizers, found " + std::to_string(count));
    for (Adam* opt : s.optimizers()) {
      const std::string name = r.str();
      if (name != opt->name()) throw CheckpointError("checkpoint: optimizer '" + name + "' out of order");
      const auto steps = r.pod<std::int64_t>();
      std::vector<AdamMoments> moments(r.pod<std::uint32_t>());
      for (auto& m : moments) {
        m.param = r.str();
        m.first = r.tensor();
        m.second = r.tensor();
      }
      opt->restore(steps, std::move(moments));
    }
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  if (!r.done()) throw CheckpointError(path.string() + ": trailing bytes after optimizer state");
  return out;
}

}  // namespace adnl
