#include "smgaa/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "smgaa/error.hpp"

namespace smgaa::io {

namespace {

constexpr std::uint16_t kTensorVersion = 1;
constexpr std::uint16_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "little-endian host required");

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size, std::string what)
      : data_(data), size_(size), what_(std::move(what)) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > size_ - pos_) throw IoError("io", what_ + " is truncated");
    const auto* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + 2 + 1 + 8 * t.rank() + 8 * t.numel());
  Writer w(out);
  w.put_bytes("SMGT", 4);
  w.put<std::uint16_t>(kTensorVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) w.put<std::uint64_t>(d);
  w.put_bytes(t.data().data(), t.numel() * sizeof(double));
  return out;
}

Tensor decode_tensor(const std::uint8_t* bytes, std::size_t size) {
  Reader r(bytes, size, "tensor blob");
  if (std::memcmp(r.take(4), "SMGT", 4) != 0) throw IoError("io", "bad tensor magic");
  const auto version = r.get<std::uint16_t>();
  if (version != kTensorVersion) throw IoError("io", "unsupported tensor version " + std::to_string(version));
  const auto rank = r.get<std::uint8_t>();
  if (rank < 1 || rank > Tensor::kMaxRank) throw IoError("io", "bad tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = r.get<std::uint64_t>();
  const std::size_t n = shape_numel(shape);
  if (n == 0 || r.remaining() != n * sizeof(double))
    throw IoError("io", "tensor payload size does not match shape " + shape_str(shape));
  std::vector<double> values(n);
  std::memcpy(values.data(), r.take(n * sizeof(double)), n * sizeof(double));
  return Tensor(shape, std::move(values));
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("io", "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("io", "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("io", "write failed for " + path.string());
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) { write_bytes(path, encode_tensor(t)); }

Tensor load_tensor(const std::filesystem::path& path) {
  auto bytes = read_bytes(path);
  try {
    return decode_tensor(bytes.data(), bytes.size());
  } catch (const IoError& e) {
    throw IoError("io", path.string() + ": " + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::vector<std::vector<std::uint8_t>> blobs;
  for (const auto& [name, t] : ckpt.tensors) blobs.push_back(encode_tensor(t));

  std::vector<std::uint8_t> out;
  Writer w(out);
  w.put_bytes("SMGC", 4);
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint64_t>(ckpt.config_text.size());
  w.put_bytes(ckpt.config_text.data(), ckpt.config_text.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  std::uint64_t offset = 0;
  std::size_t i = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.size() > 0xFFFF) throw IoError("io", "parameter name too long");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put<std::uint64_t>(offset);
    w.put<std::uint64_t>(blobs[i].size());
    offset += blobs[i].size();
    ++i;
  }
  for (const auto& b : blobs) w.put_bytes(b.data(), b.size());
  write_bytes(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  Reader r(bytes.data(), bytes.size(), path.string());
  if (std::memcmp(r.take(4), "SMGC", 4) != 0) throw IoError("io", path.string() + ": bad checkpoint magic");
  if (r.get<std::uint16_t>() != kCheckpointVersion)
    throw IoError("io", path.string() + ": unsupported checkpoint version");
  Checkpoint ckpt;
  const auto cfg_len = r.get<std::uint64_t>();
  const auto* cfg = r.take(cfg_len);
  ckpt.config_text.assign(reinterpret_cast<const char*>(cfg), cfg_len);
  const auto count = r.get<std::uint32_t>();
  struct TocEntry {
    std::string name;
    std::uint64_t offset, size;
  };
  std::vector<TocEntry> toc(count);
  for (auto& e : toc) {
    const auto len = r.get<std::uint16_t>();
    const auto* p = r.take(len);
    e.name.assign(reinterpret_cast<const char*>(p), len);
    e.offset = r.get<std::uint64_t>();
    e.size = r.get<std::uint64_t>();
  }
  const std::size_t base = r.pos();
  for (const auto& e : toc) {
    if (e.offset > bytes.size() - base || e.size > bytes.size() - base - e.offset)
      throw IoError("io", path.string() + ": entry " + e.name + " out of range");
    ckpt.tensors[e.name] = decode_tensor(bytes.data() + base + e.offset, e.size);
  }
  return ckpt;
}

// ---- WAV --------------------------------------------------------------------

void write_wav(const std::filesystem::path& path, const std::vector<double>& samples, int sample_rate) {
  std::vector<std::uint8_t> out;
  Writer w(out);
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  w.put_bytes("RIFF", 4);
  w.put<std::uint32_t>(36 + data_bytes);
  w.put_bytes("WAVE", 4);
  w.put_bytes("fmt ", 4);
  w.put<std::uint32_t>(16);
  w.put<std::uint16_t>(1);  // PCM
  w.put<std::uint16_t>(1);  // mono
  w.put<std::uint32_t>(static_cast<std::uint32_t>(sample_rate));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(sample_rate * 2));
  w.put<std::uint16_t>(2);
  w.put<std::uint16_t>(16);
  w.put_bytes("data", 4);
  w.put<std::uint32_t>(data_bytes);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    w.put<std::int16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0)));
  }
  write_bytes(path, out);
}

Wav read_wav(const std::filesystem::path& path, int expected_rate) {
  const auto bytes = read_bytes(path);
  const std::string where = path.string();
  Reader r(bytes.data(), bytes.size(), where);
  if (std::memcmp(r.take(4), "RIFF", 4) != 0) throw IoError("io", where + ": not a RIFF file");
  r.get<std::uint32_t>();
  if (std::memcmp(r.take(4), "WAVE", 4) != 0) throw IoError("io", where + ": not a WAVE file");
  bool have_fmt = false;
  Wav wav;
  while (r.remaining() >= 8) {
    char id[4];
    std::memcpy(id, r.take(4), 4);
    const auto len = r.get<std::uint32_t>();
    if (std::memcmp(id, "fmt ", 4) == 0) {
      Reader f(r.take(len), len, where + " fmt chunk");
      const auto format = f.get<std::uint16_t>();
      const auto channels = f.get<std::uint16_t>();
      const auto rate = f.get<std::uint32_t>();
      f.get<std::uint32_t>();
      f.get<std::uint16_t>();
      const auto bits = f.get<std::uint16_t>();
      if (format != 1 || bits != 16) throw IoError("io", where + ": only 16-bit PCM is supported");
      if (channels != 1) throw IoError("io", where + ": expected mono, got " + std::to_string(channels) + " channels");
      if (static_cast<int>(rate) != expected_rate)
        throw IoError("io", where + ": sample rate " + std::to_string(rate) + " Hz, expected " +
                                std::to_string(expected_rate));
      wav.sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw IoError("io", where + ": data chunk before fmt chunk");
      const std::size_t n = len / 2;
      const auto* p = r.take(n * 2);
      wav.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        std::int16_t v;
        std::memcpy(&v, p + 2 * i, 2);
        wav.samples[i] = v / 32767.0;
      }
      return wav;
    } else {
      r.take(len + (len & 1));
    }
  }
  throw IoError("io", where + ": missing data chunk");
}

// ---- CSV --------------------------------------------------------------------

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw IoError("io", "csv column '" + name + "' not found");
  return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

CsvTable parse_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw IoError("io", origin + ": missing csv header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  table.header = split_row(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_row(line);
    if (cells.size() != table.header.size())
      throw IoError("io", origin + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(table.header.size()) + " cells, got " + std::to_string(cells.size()));
    table.rows.push_back(std::move(cells));
  }
  return table;
}

std::string format_csv(const CsvTable& table) {
  std::string text;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].find_first_of(",\n") != std::string::npos)
        throw IoError("io", "csv cell contains a separator: " + cells[i]);
      if (i) text += ',';
      text += cells[i];
    }
    text += '\n';
  };
  emit(table.header);
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw IoError("io", "csv row width differs from header");
    emit(row);
  }
  return text;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("io", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path.string());
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  const std::string text = format_csv(table);
  write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace smgaa::io
