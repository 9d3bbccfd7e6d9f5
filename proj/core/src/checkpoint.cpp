#include "dsct/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dsct/errors.hpp"

namespace dsct {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in native (little-endian) order");

namespace {

constexpr char kMagic[4] = {'D', 'S', 'C', 'T'};
// Guards allocation against corrupt headers.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

class Writer {
 public:
  template <typename U>
  void put(U value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(U));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void get_bytes(void* out, std::size_t n) {
    if (n > bytes_.size() - pos_) {
      throw CorruptCheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  template <typename U>
  U get() {
    U value;
    get_bytes(&value, sizeof(U));
    return value;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    if (n > remaining()) {
      throw CorruptCheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    std::string s(n, '\0');
    get_bytes(s.data(), n);
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void write_tensor(Writer& w, std::uint8_t tag, const Tensor<T>& t) {
  w.put(tag);
  w.put(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) w.put(static_cast<std::uint64_t>(d));
  w.put_bytes(t.data(), t.numel() * sizeof(T));
}

template <typename T>
Tensor<T> read_payload(Reader& r, const Shape& shape) {
  Tensor<T> t(shape);
  r.get_bytes(t.data(), t.numel() * sizeof(T));
  return t;
}

}  // namespace

template <typename T>
const Tensor<T>& Checkpoint::get(const std::string& name) const {
  for (const auto& rec : tensors) {
    if (rec.name != name) continue;
    if (const auto* t = std::get_if<Tensor<T>>(&rec.tensor)) return *t;
    throw CorruptCheckpointError("checkpoint tensor '" + name + "' has an unexpected dtype");
  }
  throw CorruptCheckpointError("checkpoint has no tensor '" + name + "'");
}

const std::string& Checkpoint::setting(const std::string& key) const {
  const auto it = config.find(key);
  if (it == config.end()) throw CorruptCheckpointError("checkpoint has no setting '" + key + "'");
  return it->second;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put(ckpt.version);
  w.put_string(format_key_values(ckpt.config));
  w.put(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& rec : ckpt.tensors) {
    w.put_string(rec.name);
    if (const auto* f = std::get_if<Tensor<float>>(&rec.tensor)) {
      write_tensor(w, 0, *f);
    } else {
      write_tensor(w, 1, std::get<Tensor<double>>(rec.tensor));
    }
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw CorruptCheckpointError("bad checkpoint magic");
  Checkpoint ckpt;
  ckpt.version = r.get<std::uint32_t>();
  if (ckpt.version != kCheckpointVersion) {
    throw CorruptCheckpointError("unsupported checkpoint version " + std::to_string(ckpt.version));
  }
  try {
    ckpt.config = parse_key_values(r.get_string());
  } catch (const ConfigError& e) {
    throw CorruptCheckpointError(std::string("bad checkpoint config block: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    TensorRecord rec;
    rec.name = r.get_string();
    const auto tag = r.get<std::uint8_t>();
    if (tag > 1) throw CorruptCheckpointError("unknown dtype tag in record '" + rec.name + "'");
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw CorruptCheckpointError("implausible rank in record '" + rec.name + "'");
    Shape shape;
    std::uint64_t elements = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto extent = r.get<std::uint64_t>();
      if (extent == 0 || extent > kMaxElements || elements * extent > kMaxElements) {
        throw CorruptCheckpointError("bad extent in record '" + rec.name + "'");
      }
      elements *= extent;
      shape.push_back(static_cast<std::size_t>(extent));
    }
    const std::size_t width = tag == 0 ? sizeof(float) : sizeof(double);
    if (elements * width > r.remaining()) {
      throw CorruptCheckpointError("checkpoint truncated in record '" + rec.name + "'");
    }
    if (tag == 0) {
      rec.tensor = read_payload<float>(r, shape);
    } else {
      rec.tensor = read_payload<double>(r, shape);
    }
    ckpt.tensors.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw CorruptCheckpointError("trailing bytes after checkpoint records");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestionError(tmp.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IngestionError(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(path.string() + ": cannot open checkpoint");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

template const Tensor<float>& Checkpoint::get<float>(const std::string&) const;
template const Tensor<double>& Checkpoint::get<double>(const std::string&) const;

}  // namespace dsct
