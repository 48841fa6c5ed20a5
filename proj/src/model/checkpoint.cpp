#include "esiqa/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace esiqa::model {

namespace {

constexpr char kMagic[8] = {'E', 'S', 'I', 'Q', 'A', 'C', 'K', 'P'};
constexpr char kTrailer[8] = {'E', 'S', 'I', 'Q', 'A', 'E', 'N', 'D'};

class Writer {
public:
    void bytes(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    const std::string& data() const { return buf_; }

private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}
    void bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, data_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    double f64() { return std::bit_cast<double>(le(8)); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw CheckpointError("checkpoint: truncated file");
    }
    std::uint64_t le(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::string data_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const EsiqaNet& model, const KvConfig& meta) {
    KvConfig text = model.config().to_kv();
    for (const auto& key : meta.keys()) text.set("meta." + key, meta.get_string(key, ""));

    Writer w;
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    w.str(text.dump());
    const auto& entries = model.parameters().entries();
    w.u32(static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, t] : entries) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t.dim()));
        for (std::size_t e : t.shape()) w.u64(e);
        for (double v : t.data()) w.f64(v);
    }
    w.bytes(kTrailer, sizeof kTrailer);

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("checkpoint: cannot write " + tmp);
        out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
        if (!out) throw CheckpointError("checkpoint: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("checkpoint: cannot move into place " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    Reader r(ss.str());

    char magic[8];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw CheckpointError("checkpoint: bad magic in " + path);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
    }
    const KvConfig text = KvConfig::parse(r.str());
    KvConfig model_kv, meta;
    for (const auto& key : text.keys()) {
        if (key.starts_with("meta.")) {
            meta.set(key.substr(5), text.get_string(key, ""));
        } else {
            model_kv.set(key, text.get_string(key, ""));
        }
    }
    LoadedCheckpoint loaded{std::make_unique<EsiqaNet>(ModelConfig::from_kv(model_kv), 0), meta};

    std::map<std::string, Tensor> by_name;
    for (const auto& [name, t] : loaded.model->parameters().entries()) by_name.emplace(name, t);
    const std::uint32_t count = r.u32();
    if (count != by_name.size()) {
        throw CheckpointError("checkpoint: " + std::to_string(count) + " tensors but the configuration defines " +
                              std::to_string(by_name.size()));
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        auto it = by_name.find(name);
        if (it == by_name.end()) throw CheckpointError("checkpoint: unexpected tensor " + name);
        Shape shape(r.u32());
        for (auto& e : shape) e = r.u64();
        if (shape != it->second.shape()) {
            throw CheckpointError("checkpoint: tensor " + name + " has extents " + shape_str(shape) + ", expected " +
                                  shape_str(it->second.shape()));
        }
        auto dst = it->second.mutable_data();
        for (double& v : dst) v = r.f64();
    }
    char trailer[8];
    r.bytes(trailer, sizeof trailer);
    if (std::memcmp(trailer, kTrailer, sizeof trailer) != 0) throw CheckpointError("checkpoint: bad trailer in " + path);
    return loaded;
}

}  // namespace esiqa::model
