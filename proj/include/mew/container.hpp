#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mew/tensor.hpp"

namespace mew {

/// Malformed, truncated or inconsistent container file.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f32 = 0, f64 = 1, manifest = 255 };

struct Record {
    std::string name;
    Tensor tensor;
    DType dtype = DType::f64;
};

/// A file of concatenated tensor records followed by one JSON manifest record.
///
/// Record layout (little-endian): "MEWT", u16 version (=1), u8 dtype, u8 ndim,
/// ndim x u64 dims, raw payload. The manifest record has dtype 255, ndim 1,
/// dims[0] = byte length of the UTF-8 JSON text that follows. The manifest
/// object carries "records" (names in file order) plus caller metadata under "meta".
struct Container {
    std::vector<Record> records;
    nlohmann::json meta = nlohmann::json::object();

    const Record* find(const std::string& name) const;
    const Tensor& tensor(const std::string& name) const;
};

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

std::string encode_container(const Container& c);
Container decode_container(const std::string& bytes);

}  // namespace mew
