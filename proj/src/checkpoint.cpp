#include "restore/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "restore/config.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace restore {

namespace {

constexpr char kMagic[8] = {'R', 'S', 'T', 'R', 'C', 'K', 'P', 'T'};

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
    const auto* b = reinterpret_cast<const unsigned char*>(&v);
    buf.insert(buf.end(), b, b + 4);
}

void put_bytes(std::vector<unsigned char>& buf, const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf.insert(buf.end(), b, b + n);
}

std::uint32_t crc_of(const unsigned char* p, std::size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = crc32(crc, p, chunk);
        p += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

class Reader {
public:
    Reader(const std::vector<unsigned char>& buf, std::size_t end, std::string file)
        : buf_(buf), end_(end), file_(std::move(file)) {}

    const unsigned char* take(std::size_t n) {
        if (pos_ + n > end_) throw std::runtime_error(file_ + ": truncated checkpoint");
        const auto* p = buf_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        std::memcpy(&v, take(4), 4);
        return v;
    }
    std::string str(std::size_t n) {
        const auto* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }
    std::size_t pos() const { return pos_; }

private:
    const std::vector<unsigned char>& buf_;
    std::size_t end_, pos_ = 0;
    std::string file_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Model& m) {
    std::vector<unsigned char> buf;
    put_bytes(buf, kMagic, sizeof kMagic);
    put_u32(buf, kCheckpointVersion);
    const std::string cfg = model_config_text(m.cfg);
    put_u32(buf, static_cast<std::uint32_t>(cfg.size()));
    put_bytes(buf, cfg.data(), cfg.size());
    auto params = m.parameters();
    put_u32(buf, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put_u32(buf, static_cast<std::uint32_t>(p.name.size()));
        put_bytes(buf, p.name.data(), p.name.size());
        put_u32(buf, static_cast<std::uint32_t>(p.tensor.rank()));
        for (int d : p.tensor.shape()) put_u32(buf, static_cast<std::uint32_t>(d));
        put_bytes(buf, p.tensor.ptr(), p.tensor.numel() * sizeof(float));
    }
    put_u32(buf, crc_of(buf.data(), buf.size()));

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    const std::vector<unsigned char> buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    const std::string file = path.string();
    if (buf.size() < sizeof kMagic + 8 || std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0)
        throw std::runtime_error(file + ": not a checkpoint");
    std::uint32_t stored;
    std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
    if (crc_of(buf.data(), buf.size() - 4) != stored) throw std::runtime_error(file + ": checksum mismatch");

    Reader r(buf, buf.size() - 4, file);
    r.take(sizeof kMagic);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw std::runtime_error(file + ": unsupported checkpoint version " + std::to_string(version));
    const auto cfg = parse_config(r.str(r.u32())).model;
    Model m = build_model(cfg, 0);

    auto params = m.parameters();
    const std::uint32_t count = r.u32();
    if (count != params.size())
        throw std::runtime_error(file + ": " + std::to_string(count) + " parameters, model expects " +
                                 std::to_string(params.size()));
    for (auto& p : params) {
        const std::string name = r.str(r.u32());
        if (name != p.name) throw std::runtime_error(file + ": expected parameter " + p.name + ", found " + name);
        Shape shape(r.u32());
        for (auto& d : shape) d = static_cast<int>(r.u32());
        if (shape != p.tensor.shape())
            throw std::runtime_error(file + ": " + name + " has shape " + shape_str(shape) + ", model expects " +
                                     shape_str(p.tensor.shape()));
        std::memcpy(p.tensor.ptr(), r.take(p.tensor.numel() * sizeof(float)), p.tensor.numel() * sizeof(float));
    }
    if (r.pos() != buf.size() - 4) throw std::runtime_error(file + ": trailing bytes after parameters");
    return m;
}

}  // namespace restore
