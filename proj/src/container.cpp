#include "mew/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mew {
namespace {

constexpr char kMagic[4] = {'M', 'E', 'W', 'T'};
constexpr std::uint16_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "container IO assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    bool done() const { return pos_ == bytes_.size(); }

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    const char* take(std::size_t n) {
        need(n);
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw FormatError("container truncated");
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

void put_header(std::string& out, DType dtype, const Shape& dims) {
    out.append(kMagic, 4);
    put<std::uint16_t>(out, kVersion);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(dims.size()));
    for (std::size_t d : dims) put<std::uint64_t>(out, d);
}

}  // namespace

const Record* Container::find(const std::string& name) const {
    for (const Record& r : records)
        if (r.name == name) return &r;
    return nullptr;
}

const Tensor& Container::tensor(const std::string& name) const {
    const Record* r = find(name);
    if (!r) throw FormatError("container has no record named '" + name + "'");
    return r->tensor;
}

std::string encode_container(const Container& c) {
    std::string out;
    nlohmann::json names = nlohmann::json::array();
    for (const Record& r : c.records) {
        if (r.dtype == DType::manifest) throw FormatError("manifest dtype is reserved");
        if (r.tensor.rank() > 255) throw FormatError("tensor rank too large");
        put_header(out, r.dtype, r.tensor.shape());
        if (r.dtype == DType::f64) {
            for (double v : r.tensor.data()) put<double>(out, v);
        } else {
            for (double v : r.tensor.data()) put<float>(out, static_cast<float>(v));
        }
        names.push_back(r.name);
    }
    const std::string text = nlohmann::json{{"records", names}, {"meta", c.meta}}.dump();
    put_header(out, DType::manifest, {text.size()});
    out += text;
    return out;
}

Container decode_container(const std::string& bytes) {
    Reader in(bytes);
    std::vector<Record> records;
    bool have_manifest = false;
    Container c;
    while (!in.done()) {
        if (have_manifest) throw FormatError("data after manifest record");
        if (std::memcmp(in.take(4), kMagic, 4) != 0) throw FormatError("bad magic bytes");
        if (in.get<std::uint16_t>() != kVersion) throw FormatError("unsupported container version");
        const auto dtype = in.get<std::uint8_t>();
        const auto ndim = in.get<std::uint8_t>();
        Shape dims(ndim);
        for (auto& d : dims) d = in.get<std::uint64_t>();
        if (dtype == static_cast<std::uint8_t>(DType::manifest)) {
            if (ndim != 1) throw FormatError("manifest record must have one dimension");
            if (dims[0] > bytes.size()) throw FormatError("container truncated");
            const char* p = in.take(dims[0]);
            nlohmann::json m;
            try {
                m = nlohmann::json::parse(std::string(p, dims[0]));
            } catch (const nlohmann::json::exception& e) {
                throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
            }
            const auto& names = m.at("records");
            if (!names.is_array() || names.size() != records.size())
                throw FormatError("manifest names " + std::to_string(names.size()) + " records, file holds " +
                                  std::to_string(records.size()));
            for (std::size_t i = 0; i < records.size(); ++i) records[i].name = names[i].get<std::string>();
            c.meta = m.value("meta", nlohmann::json::object());
            have_manifest = true;
            continue;
        }
        if (dtype > 1) throw FormatError("unknown dtype " + std::to_string(dtype));
        if (ndim == 0) throw FormatError("tensor record with zero dimensions");
        for (std::size_t d : dims)
            if (d == 0 || d > bytes.size()) throw FormatError("invalid dimension in record header");
        const std::size_t n = shape_numel(dims);
        const std::size_t width = dtype == 0 ? 4 : 8;
        if (n > bytes.size() / width) throw FormatError("container truncated");
        const char* p = in.take(n * width);
        Tensor t(dims);
        for (std::size_t i = 0; i < n; ++i) {
            if (width == 8) {
                std::memcpy(&t[i], p + i * 8, 8);
            } else {
                float f;
                std::memcpy(&f, p + i * 4, 4);
                t[i] = f;
            }
        }
        records.push_back({"", std::move(t), dtype == 0 ? DType::f32 : DType::f64});
    }
    if (!have_manifest) throw FormatError("container has no manifest record (truncated?)");
    c.records = std::move(records);
    return c;
}

void write_container(const std::filesystem::path& path, const Container& c) {
    const std::string bytes = encode_container(c);
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Container read_container(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_container(ss.str());
}

}  // namespace mew
