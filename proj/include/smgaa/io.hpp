#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "smgaa/tensor.hpp"

namespace smgaa::io {

// SMGT tensor encoding: "SMGT", u16 version, u8 rank, u64 extents, f64 values,
// all little-endian.
std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::uint8_t* bytes, std::size_t size);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// Checkpoint container: "SMGC", u16 version, u64 config length, config text,
// u32 entry count, then per entry (u16 name length, name, u64 offset, u64 size),
// then the SMGT blobs. Offsets are relative to the start of the blob area.
struct Checkpoint {
  std::string config_text;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// 16-bit PCM mono WAV. Reading rejects any other layout or rate.
struct Wav {
  std::vector<double> samples;
  int sample_rate = 16000;
};

void write_wav(const std::filesystem::path& path, const std::vector<double>& samples, int sample_rate);
Wav read_wav(const std::filesystem::path& path, int expected_rate = 16000);

// Minimal CSV: comma separated, no quoting, header row required.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text, const std::string& origin = "csv");
std::string format_csv(const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace smgaa::io
