#include "augpaint/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "augpaint/errors.hpp"

namespace augpaint {

namespace {

constexpr char kMagic[8] = {'A', 'U', 'G', 'P', 'A', 'I', 'N', 'T'};

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::filesystem::path& path) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("truncated checkpoint: " + path.string());
    return v;
}

}  // namespace

const Tensor& Checkpoint::array(const std::string& name) const {
    for (const auto& [n, t] : arrays) {
        if (n == name) return t;
    }
    throw IoError("checkpoint array not found: " + name);
}

void Checkpoint::save(const std::filesystem::path& path) const {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open for writing: " + tmp);
        os.write(kMagic, sizeof(kMagic));
        write_pod<std::uint32_t>(os, kFormatVersion);
        const std::string meta_str = meta.dump();
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(meta_str.size()));
        os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(arrays.size()));
        for (const auto& [name, t] : arrays) {
            write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            const Shape s = t.shape();
            write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.n));
            write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.c));
            write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.h));
            write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.w));
            os.write(reinterpret_cast<const char*>(t.data()),
                     static_cast<std::streamsize>(sizeof(float) * t.size()));
        }
        if (!os) throw IoError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw IoError("not an augpaint checkpoint: " + path.string());
    }
    const auto version = read_pod<std::uint32_t>(is, path);
    if (version != kFormatVersion) {
        throw IoError("unsupported checkpoint format version " + std::to_string(version) +
                      " (expected " + std::to_string(kFormatVersion) + "): " + path.string());
    }
    Checkpoint ck;
    const auto meta_len = read_pod<std::uint32_t>(is, path);
    std::string meta_str(meta_len, '\0');
    is.read(meta_str.data(), meta_len);
    if (!is) throw IoError("truncated checkpoint: " + path.string());
    ck.meta = nlohmann::json::parse(meta_str, nullptr, false);
    if (ck.meta.is_discarded()) throw IoError("corrupt checkpoint metadata: " + path.string());

    const auto count = read_pod<std::uint32_t>(is, path);
    ck.arrays.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint16_t>(is, path);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        Shape s;
        s.n = static_cast<int>(read_pod<std::uint32_t>(is, path));
        s.c = static_cast<int>(read_pod<std::uint32_t>(is, path));
        s.h = static_cast<int>(read_pod<std::uint32_t>(is, path));
        s.w = static_cast<int>(read_pod<std::uint32_t>(is, path));
        Tensor t(s);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(sizeof(float) * t.size()));
        if (!is) throw IoError("truncated checkpoint: " + path.string());
        ck.arrays.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    if (!path.parent_path().empty()) {
        std::filesystem::create_directories(path.parent_path());
    }
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open for writing: " + tmp);
        os.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!os) throw IoError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace augpaint
