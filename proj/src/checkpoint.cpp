#include "pvae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "pvae/errors.hpp"

namespace pvae {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), c, c + n);
    }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
    void bytes(void* p, std::size_t n) {
        if (n > b_.size() - pos_) throw FormatError("checkpoint truncated");
        std::memcpy(p, b_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, 8);
        return v;
    }
    std::string str() {
        const std::uint64_t n = u64();
        if (n > b_.size() - pos_) throw FormatError("checkpoint truncated");
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    bool done() const { return pos_ == b_.size(); }

private:
    const std::vector<std::uint8_t>& b_;
    std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'P', 'V', 'A', 'E'};

Tensor copy_values(const Tensor& t) { return Tensor::from(t.shape(), {t.data().begin(), t.data().end()}); }

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.bytes(kMagic, 4);
    w.u32(kCheckpointVersion);
    w.str(ckpt.config_text);
    w.u64(ckpt.step);
    w.u64(ckpt.tensors.size());
    for (const auto& [name, t] : ckpt.tensors) {
        w.str(name);
        w.u64(t.rank());
        for (std::size_t d : t.shape()) w.u64(d);
        w.bytes(t.raw(), t.numel() * sizeof(double));
    }
    return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    c.config_text = r.str();
    c.step = r.u64();
    const std::uint64_t count = r.u64();
    if (count > bytes.size()) throw FormatError("checkpoint tensor count implausible");
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = r.str();
        const std::uint64_t rank = r.u64();
        if (rank == 0 || rank > 8) throw FormatError("checkpoint tensor '" + name + "' has bad rank");
        Shape shape(rank);
        std::size_t n = 1;
        for (auto& d : shape) {
            d = r.u64();
            if (d == 0 || d > bytes.size()) throw FormatError("checkpoint tensor '" + name + "' has bad dims");
            n *= d;
        }
        if (n > bytes.size() / sizeof(double)) throw FormatError("checkpoint truncated");
        std::vector<double> v(n);
        r.bytes(v.data(), n * sizeof(double));
        c.tensors.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(v)));
    }
    if (!r.done()) throw FormatError("trailing bytes after checkpoint");
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize_checkpoint(ckpt);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

Checkpoint make_checkpoint(const RunConfig& config, const Model& model, const TrainState& state) {
    Checkpoint c;
    c.config_text = to_text(config);
    c.step = state.step;
    const auto& entries = model.parameters().entries();
    for (const auto& [name, t] : entries) c.tensors.emplace_back(name, copy_values(t));
    if (state.adam.m.size() == entries.size()) {
        for (std::size_t i = 0; i < entries.size(); ++i)
            c.tensors.emplace_back("adam.m/" + entries[i].first, copy_values(state.adam.m[i]));
        for (std::size_t i = 0; i < entries.size(); ++i)
            c.tensors.emplace_back("adam.v/" + entries[i].first, copy_values(state.adam.v[i]));
        c.tensors.emplace_back("state.adam_step", Tensor::scalar(static_cast<double>(state.adam.step)));
    }
    c.tensors.emplace_back("state.interval_sums", Tensor::from({state.interval_sums.size()}, state.interval_sums));
    c.tensors.emplace_back("state.seconds", Tensor::scalar(state.seconds));
    return c;
}

Restored restore_checkpoint(const Checkpoint& ckpt) {
    const RunConfig config = parse_config_text(ckpt.config_text);
    Restored out{config, build_model(config.model, config.train.seed), TrainState{}};
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : ckpt.tensors) by_name[name] = &t;
    auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor& {
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("checkpoint lacks tensor '" + name + "'");
        if (it->second->shape() != shape)
            throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_str(it->second->shape()) +
                              ", expected " + shape_str(shape));
        return *it->second;
    };
    auto& entries = out.model.parameters().entries();
    for (auto& [name, t] : entries) {
        const Tensor& src = fetch(name, t.shape());
        std::span<double> dst = t.mutable_data();
        std::copy(src.data().begin(), src.data().end(), dst.begin());
    }
    out.state.step = ckpt.step;
    out.state.adam = make_adam_state(out.model.parameters());
    if (by_name.count("state.adam_step")) {
        out.state.adam.step = static_cast<std::uint64_t>(fetch("state.adam_step", {1}).item());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            out.state.adam.m[i] = copy_values(fetch("adam.m/" + entries[i].first, entries[i].second.shape()));
            out.state.adam.v[i] = copy_values(fetch("adam.v/" + entries[i].first, entries[i].second.shape()));
        }
    }
    if (const auto it = by_name.find("state.interval_sums"); it != by_name.end())
        out.state.interval_sums.assign(it->second->data().begin(), it->second->data().end());
    if (const auto it = by_name.find("state.seconds"); it != by_name.end()) out.state.seconds = it->second->item();
    return out;
}

}  // namespace pvae
