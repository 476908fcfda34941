#include "ctrlp/checkpoint.hpp"

#include "ctrlp/error.hpp"
#include "ctrlp/text.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace ctrlp {

namespace {

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    const std::vector<unsigned char>& buffer() const { return buf_; }

private:
    std::vector<unsigned char> buf_;
};

class Reader {
public:
    explicit Reader(std::vector<unsigned char> data) : data_(std::move(data)) {}

    const unsigned char* take(std::size_t n) {
        if (data_.size() - pos_ < n) throw DataError("truncated checkpoint");
        const unsigned char* p = data_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint8_t u8() { return *take(1); }
    std::uint32_t u32() {
        const unsigned char* p = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        const unsigned char* p = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str() {
        const std::uint32_t n = u32();
        const unsigned char* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }
    bool at_end() const { return pos_ == data_.size(); }

private:
    std::vector<unsigned char> data_;
    std::size_t pos_ = 0;
};

} // namespace

void save_checkpoint(const std::filesystem::path& path, ModelNet<float>& model, const Normalizer& normalizer,
                     std::uint64_t step, const ConfigEntries& run_config) {
    const std::size_t width = model.config().input_len;
    Writer w;
    w.bytes(kCheckpointMagic, 6);
    w.u32(kCheckpointVersion);

    ConfigEntries entries = to_entries(model.config());
    std::set<std::string> model_keys;
    for (const auto& [k, v] : entries) model_keys.insert(k);
    for (const auto& entry : run_config)
        if (!model_keys.contains(entry.first)) entries.push_back(entry);
    std::string blob;
    for (const auto& [k, v] : entries) blob += k + "=" + v + "\n";
    w.str(blob);

    auto state = model.state();
    w.u32(static_cast<std::uint32_t>(state.size()));
    for (const auto& [name, tensor] : state) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(tensor->rank()));
        for (std::size_t d : tensor->shape()) w.u32(static_cast<std::uint32_t>(d));
        for (float v : tensor->values()) w.f32(v);
    }

    w.u8(static_cast<std::uint8_t>(normalizer.mode));
    const bool stats = normalizer.mode == NormMode::per_feature;
    if (stats && (normalizer.mean.size() != width || normalizer.std.size() != width))
        throw UsageError("normalizer width does not match the model input length");
    for (std::size_t j = 0; j < width; ++j) w.f32(stats ? normalizer.mean[j] : 0.0f);
    for (std::size_t j = 0; j < width; ++j) w.f32(stats ? normalizer.std[j] : 1.0f);
    w.u64(step);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(w.buffer().data()), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw DataError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    Reader r(std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {}));

    try {
        if (std::memcmp(r.take(6), kCheckpointMagic, 6) != 0) throw DataError("");
    } catch (const DataError&) {
        throw DataError(path.string() + ": not a checkpoint");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));

    ModelConfig config;
    ConfigEntries entries;
    for (const auto& line : text::split(r.str(), '\n')) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("malformed checkpoint config line '" + line + "'");
        entries.emplace_back(line.substr(0, eq), line.substr(eq + 1));
        try {
            apply_model_entry(config, entries.back().first, entries.back().second);
        } catch (const UsageError& e) {
            throw DataError(std::string("checkpoint config: ") + e.what());
        }
    }

    Checkpoint ckpt{ModelNet<float>(config, 0), {}, 0, std::move(entries)};
    auto state = ckpt.model.state();
    const std::uint32_t count = r.u32();
    if (count != state.size())
        throw DataError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                        std::to_string(state.size()));
    for (auto& [name, tensor] : state) {
        const std::string stored = r.str();
        if (stored != name) throw DataError("checkpoint tensor '" + stored + "' where '" + name + "' was expected");
        Shape shape(r.u32());
        for (auto& d : shape) d = r.u32();
        if (shape != tensor->shape())
            throw DataError("checkpoint tensor " + name + " has shape " + shape_string(shape) + ", config implies " +
                            shape_string(tensor->shape()));
        for (auto& v : tensor->values()) v = r.f32();
    }

    const std::uint8_t mode = r.u8();
    if (mode > 1) throw DataError("checkpoint has unknown normalizer mode " + std::to_string(mode));
    const std::size_t width = config.input_len;
    ckpt.normalizer.mode = static_cast<NormMode>(mode);
    std::vector<float> mean(width), sd(width);
    for (auto& v : mean) v = r.f32();
    for (auto& v : sd) v = r.f32();
    if (ckpt.normalizer.mode == NormMode::per_feature) {
        ckpt.normalizer.mean = std::move(mean);
        ckpt.normalizer.std = std::move(sd);
    }
    ckpt.step = r.u64();
    if (!r.at_end()) throw DataError(path.string() + ": trailing bytes after checkpoint");
    return ckpt;
}

} // namespace ctrlp
