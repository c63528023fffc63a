#include "rectdiff/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace rectdiff {

namespace {

constexpr char kMagic[8] = {'R', 'D', 'C', 'O', 'N', 'T', '0', '1'};

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.append(s);
}

struct Reader {
    std::string buf;
    size_t pos = 0;
    std::string path;

    void need(size_t n) {
        if (pos + n > buf.size())
            throw Error(ErrorCategory::io, "container: truncated file " + path);
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        uint32_t n = u32();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

const std::string& Container::meta_at(const std::string& key) const {
    auto it = meta_.find(key);
    if (it == meta_.end())
        throw Error(ErrorCategory::io, "container: missing metadata key '" + key + "'");
    return it->second;
}

void Container::add_tensor(const std::string& name, const std::string& kind, const Tensor& t) {
    ContainerEntry e;
    e.name = name;
    e.kind = kind;
    for (int d : t.shape()) e.dims.push_back(static_cast<uint64_t>(d));
    e.f64 = t.value();
    entries_.push_back(std::move(e));
}

void Container::add_f64(const std::string& name, const std::string& kind,
                        std::vector<double> data) {
    ContainerEntry e;
    e.name = name;
    e.kind = kind;
    e.dims = {data.size()};
    e.f64 = std::move(data);
    entries_.push_back(std::move(e));
}

void Container::add_u64(const std::string& name, const std::string& kind,
                        std::vector<uint64_t> data) {
    ContainerEntry e;
    e.name = name;
    e.kind = kind;
    e.dims = {data.size()};
    e.is_f64 = false;
    e.u64 = std::move(data);
    entries_.push_back(std::move(e));
}

const ContainerEntry* Container::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return &e;
    return nullptr;
}

const ContainerEntry& Container::at(const std::string& name) const {
    const ContainerEntry* e = find(name);
    if (!e)
        throw Error(ErrorCategory::io, "container: missing entry '" + name + "'");
    return *e;
}

Tensor Container::tensor(const std::string& name, bool requires_grad) const {
    const ContainerEntry& e = at(name);
    if (!e.is_f64)
        throw Error(ErrorCategory::io, "container: entry '" + name + "' is not f64");
    Shape shape;
    for (uint64_t d : e.dims) shape.push_back(static_cast<int>(d));
    return Tensor::from_data(std::move(shape), e.f64, requires_grad);
}

void Container::save(const std::string& path) const {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u32(out, kVersion);
    put_str(out, artifact_);
    put_u32(out, static_cast<uint32_t>(meta_.size()));
    for (const auto& [k, v] : meta_) {
        put_str(out, k);
        put_str(out, v);
    }
    put_u32(out, static_cast<uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
        put_str(out, e.name);
        put_str(out, e.kind);
        out.push_back(e.is_f64 ? 0 : 1);
        put_u32(out, static_cast<uint32_t>(e.dims.size()));
        uint64_t count = 1;
        for (uint64_t d : e.dims) {
            put_u64(out, d);
            count *= d;
        }
        if (e.is_f64) {
            if (e.f64.size() != count)
                throw Error(ErrorCategory::state, "container: entry '" + e.name + "' size mismatch");
            for (double v : e.f64) put_f64(out, v);
        } else {
            if (e.u64.size() != count)
                throw Error(ErrorCategory::state, "container: entry '" + e.name + "' size mismatch");
            for (uint64_t v : e.u64) put_u64(out, v);
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw Error(ErrorCategory::io, "container: cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f)
        throw Error(ErrorCategory::io, "container: short write to '" + path + "'");
}

Container Container::load(const std::string& path, const std::string& expected_artifact) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw Error(ErrorCategory::io, "container: cannot open '" + path + "'");
    Reader r;
    r.path = path;
    r.buf.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());

    r.need(sizeof(kMagic));
    if (std::memcmp(r.buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw Error(ErrorCategory::io, "container: corrupt header in '" + path + "'");
    r.pos = sizeof(kMagic);
    uint32_t version = r.u32();
    if (version != kVersion)
        throw Error(ErrorCategory::io, "container: unsupported version " + std::to_string(version) +
                                           " in '" + path + "' (expected " +
                                           std::to_string(kVersion) + ")");
    Container c(r.str());
    if (!expected_artifact.empty() && c.artifact_ != expected_artifact)
        throw Error(ErrorCategory::io, "container: '" + path + "' holds artifact '" + c.artifact_ +
                                           "', expected '" + expected_artifact + "'");
    uint32_t nmeta = r.u32();
    for (uint32_t i = 0; i < nmeta; ++i) {
        std::string k = r.str();
        c.meta_[k] = r.str();
    }
    uint32_t nent = r.u32();
    for (uint32_t i = 0; i < nent; ++i) {
        ContainerEntry e;
        e.name = r.str();
        e.kind = r.str();
        r.need(1);
        e.is_f64 = r.buf[r.pos++] == 0;
        uint32_t rank = r.u32();
        uint64_t count = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            e.dims.push_back(r.u64());
            count *= e.dims.back();
        }
        if (e.is_f64) {
            e.f64.reserve(count);
            for (uint64_t j = 0; j < count; ++j) e.f64.push_back(r.f64());
        } else {
            e.u64.reserve(count);
            for (uint64_t j = 0; j < count; ++j) e.u64.push_back(r.u64());
        }
        c.entries_.push_back(std::move(e));
    }
    if (r.pos != r.buf.size())
        throw Error(ErrorCategory::io, "container: trailing bytes in '" + path + "'");
    return c;
}

}  // namespace rectdiff
