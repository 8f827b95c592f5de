#include "trifusion/tensor_file.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace trifusion {

static_assert(std::endian::native == std::endian::little, "TensorFile I/O assumes a little-endian host");
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

namespace {

constexpr char kMagic[4] = {'T', 'N', 'S', 'R'};

void put_u32(std::string& out, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    out.append(b, 4);
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v;
        std::memcpy(&v, bytes_.data() + pos_, 4);
        pos_ += 4;
        return v;
    }

    std::string take(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void floats(float* out, std::size_t count) {
        if (count > (bytes_.size() - pos_) / 4) {
            throw FormatError("truncated payload: need " + std::to_string(count) + " floats, " +
                                  std::to_string((bytes_.size() - pos_) / 4) + " present",
                              pos_);
        }
        std::memcpy(out, bytes_.data() + pos_, count * 4);
        pos_ += count * 4;
    }

private:
    void need(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(std::string("truncated ") + what, pos_);
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_tensors(const std::vector<NamedTensor>& entries) {
    std::string out(kMagic, 4);
    put_u32(out, kTensorFileVersion);
    std::set<std::string> seen;
    for (const auto& [name, t] : entries) {
        const std::uint64_t at = out.size();
        if (!seen.insert(name).second) {
            throw FormatError("duplicate tensor name '" + name + "'", at);
        }
        if (name.size() > std::numeric_limits<std::uint32_t>::max()) {
            throw FormatError("tensor name too long", at);
        }
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (!std::isfinite(t[i])) {
                throw FormatError("non-finite value in '" + name + "' at element " + std::to_string(i), at);
            }
        }
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) {
            if (d > std::numeric_limits<std::uint32_t>::max()) {
                throw FormatError("dimension of '" + name + "' exceeds u32", at);
            }
            put_u32(out, static_cast<std::uint32_t>(d));
        }
        out.append(reinterpret_cast<const char*>(t.data().data()), t.size() * 4);
    }
    return out;
}

std::vector<NamedTensor> decode_tensors(const std::string& bytes) {
    Reader in(bytes);
    const std::string magic = in.take(4, "magic");
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw FormatError("bad magic, expected \"TNSR\"", 0);
    }
    const std::size_t version_at = in.offset();
    const std::uint32_t version = in.u32("version");
    if (version != kTensorFileVersion) {
        throw FormatError("unsupported version " + std::to_string(version), version_at);
    }
    std::vector<NamedTensor> entries;
    std::set<std::string> seen;
    while (!in.done()) {
        const std::size_t entry_at = in.offset();
        const std::uint32_t name_len = in.u32("name length");
        std::string name = in.take(name_len, "name");
        if (!seen.insert(name).second) {
            throw FormatError("duplicate tensor name '" + name + "'", entry_at);
        }
        const std::size_t ndim_at = in.offset();
        const std::uint32_t ndim = in.u32("rank");
        if (ndim == 0) {
            throw FormatError("entry '" + name + "' has rank 0", ndim_at);
        }
        Shape shape;
        std::uint64_t count = 1;
        for (std::uint32_t i = 0; i < ndim; ++i) {
            const std::size_t dim_at = in.offset();
            const std::uint32_t d = in.u32("dims");
            if (d == 0) {
                throw FormatError("entry '" + name + "' has a zero dimension", dim_at);
            }
            count *= d;
            if (count > bytes.size()) {
                throw FormatError("entry '" + name + "' declares more elements than the file holds", dim_at);
            }
            shape.push_back(d);
        }
        Tensor t(shape);
        in.floats(t.mutable_data().data(), t.size());
        entries.emplace_back(std::move(name), std::move(t));
    }
    return entries;
}

void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& entries) {
    const std::string bytes = encode_tensors(entries);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw InputError("cannot open " + path.string() + " for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw InputError("failed writing " + path.string());
    }
}

std::vector<NamedTensor> read_tensors(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return decode_tensors(buf.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.detail(), e.offset());
    }
}

const Tensor& find_tensor(const std::vector<NamedTensor>& entries, const std::string& name) {
    for (const auto& [n, t] : entries) {
        if (n == name) {
            return t;
        }
    }
    throw FormatError("missing entry '" + name + "'", 0);
}

}  // namespace trifusion
