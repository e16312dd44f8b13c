#include "fcap/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace fcap {

namespace {

constexpr char kMagic[4] = {'F', 'C', 'A', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_i64(std::string& buf, std::int64_t v) { put_u64(buf, static_cast<std::uint64_t>(v)); }
void put_f32(std::string& buf, float v) { put_u32(buf, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::string& buf, double v) { put_u64(buf, std::bit_cast<std::uint64_t>(v)); }
void put_f32v(std::string& buf, const float* v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) put_f32(buf, v[i]);
}
void put_str(std::string& buf, const std::string& s) {
    put_u32(buf, static_cast<std::uint32_t>(s.size()));
    buf.append(s);
}

// Bounds-checked reader; every failure reports the absolute file offset.
class Cursor {
public:
    Cursor(const std::string& data, std::size_t base, std::size_t len, std::string section)
        : data_(data), pos_(base), end_(base + len), section_(std::move(section)) {
        if (end_ > data.size())
            throw FormatError("section " + section_ + " extends past end of file", data.size());
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void f32v(float* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = f32();
    }
    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }
    std::size_t offset() const { return pos_; }
    bool at_end() const { return pos_ == end_; }

private:
    void need(std::size_t n) {
        if (pos_ + n > end_)
            throw FormatError("truncated " + section_ + " section", pos_);
    }
    const std::string& data_;
    std::size_t pos_, end_;
    std::string section_;
};

std::string pad_name(const std::string& name) {
    std::string s = name;
    s.resize(8, ' ');
    return s;
}

} // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::vector<std::pair<std::string, std::string>> sections;

    {
        std::string meta;
        put_u32(meta, ck.spec.kind == ArchKind::Conv ? 0u : 1u);
        put_i64(meta, ck.spec.n_out);
        put_i64(meta, ck.train_step);
        put_u64(meta, ck.seed);
        sections.emplace_back("META", std::move(meta));
    }
    {
        std::string blob;
        auto named = ck.params.named(ck.spec);
        put_u32(blob, static_cast<std::uint32_t>(named.size()));
        for (const auto& [name, t] : named) {
            put_str(blob, name);
            put_u32(blob, static_cast<std::uint32_t>(t->ndim()));
            for (std::int64_t e : t->shape()) put_i64(blob, e);
            put_f32v(blob, t->data(), static_cast<std::size_t>(t->numel()));
        }
        sections.emplace_back("PARAMS", std::move(blob));
    }
    if (ck.has_whitening) {
        std::string blob;
        put_f64(blob, ck.whitening.mean);
        put_f64(blob, ck.whitening.std);
        sections.emplace_back("WHITEN", std::move(blob));
    }
    if (ck.has_input_basis) {
        std::string blob;
        const PcaBasis& b = ck.input_basis;
        put_i64(blob, b.k);
        put_i64(blob, b.d);
        put_f64(blob, b.total_variance);
        put_f32v(blob, b.mean.data(), b.mean.size());
        put_f32v(blob, b.variances.data(), b.variances.size());
        put_f32v(blob, b.components.data(), b.components.size());
        sections.emplace_back("INPCA", std::move(blob));
    }
    if (ck.output_basis.present) {
        std::string blob;
        put_i64(blob, ck.output_basis.k);
        put_i64(blob, ck.output_basis.d);
        put_f64(blob, ck.output_basis.total_variance);
        put_f32v(blob, ck.output_basis.variances.data(), ck.output_basis.variances.size());
        sections.emplace_back("OUTPCA", std::move(blob));
    }
    if (ck.adam.present) {
        std::string blob;
        put_i64(blob, ck.adam.t);
        put_u32(blob, static_cast<std::uint32_t>(ck.adam.m.size()));
        for (std::size_t i = 0; i < ck.adam.m.size(); ++i) {
            put_u64(blob, ck.adam.m[i].size());
            put_f32v(blob, ck.adam.m[i].data(), ck.adam.m[i].size());
            put_f32v(blob, ck.adam.v[i].data(), ck.adam.v[i].size());
        }
        sections.emplace_back("ADAM", std::move(blob));
    }

    std::string header;
    header.append(kMagic, 4);
    put_u32(header, kVersion);
    put_u32(header, static_cast<std::uint32_t>(sections.size()));
    std::size_t offset = header.size() + sections.size() * 24;
    std::string table;
    for (const auto& [name, blob] : sections) {
        table += pad_name(name);
        put_u64(table, offset);
        put_u64(table, blob.size());
        offset += blob.size();
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open checkpoint file for writing: " + path);
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    f.write(table.data(), static_cast<std::streamsize>(table.size()));
    for (const auto& [name, blob] : sections)
        f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    f.flush();
    if (!f) throw Error("write failed for checkpoint file: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open checkpoint file: " + path);
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (data.size() < 12) throw FormatError("file too short for FCAP header", data.size());
    if (std::memcmp(data.data(), kMagic, 4) != 0)
        throw FormatError("bad magic, expected FCAP", 0);

    Cursor head(data, 4, data.size() - 4, "header");
    const std::uint32_t version = head.u32();
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
    const std::uint32_t nsections = head.u32();
    if (data.size() < 12 + static_cast<std::size_t>(nsections) * 24)
        throw FormatError("truncated section table", data.size());

    struct Section {
        std::string name;
        std::uint64_t offset, length;
    };
    std::vector<Section> table;
    {
        Cursor c(data, 12, static_cast<std::size_t>(nsections) * 24, "table");
        for (std::uint32_t i = 0; i < nsections; ++i) {
            Section s;
            s.name = data.substr(c.offset(), 8);
            c.skip(8);
            s.offset = c.u64();
            s.length = c.u64();
            while (!s.name.empty() && s.name.back() == ' ') s.name.pop_back();
            if (s.offset + s.length > data.size())
                throw FormatError("section " + s.name + " extends past end of file",
                                  static_cast<std::uint64_t>(data.size()));
            table.push_back(std::move(s));
        }
    }
    auto find = [&](const std::string& name) -> const Section* {
        for (const auto& s : table)
            if (s.name == name) return &s;
        return nullptr;
    };

    Checkpoint ck;
    ck.version = version;

    const Section* meta = find("META");
    if (!meta) throw FormatError("missing META section", 12);
    {
        Cursor c(data, meta->offset, meta->length, "META");
        const std::uint32_t arch = c.u32();
        if (arch > 1) throw FormatError("unknown architecture id " + std::to_string(arch),
                                        c.offset());
        const std::int64_t n_out = c.i64();
        ck.train_step = c.i64();
        ck.seed = c.u64();
        ck.spec = build_model(arch == 0 ? ArchKind::Conv : ArchKind::Fc, n_out);
    }

    const Section* ps = find("PARAMS");
    if (!ps) throw FormatError("missing PARAMS section", 12);
    {
        Cursor c(data, ps->offset, ps->length, "PARAMS");
        // canonical layer order, weight then bias; names and shapes are checked
        ck.params.weights.resize(ck.spec.layers.size());
        ck.params.biases.resize(ck.spec.layers.size());
        std::vector<std::pair<std::string, TensorPtr>> expected;
        for (std::size_t i = 0; i < ck.spec.layers.size(); ++i) {
            const LayerDesc& l = ck.spec.layers[i];
            if (l.kind == LayerKind::Dropout) continue;
            const Shape wshape = l.kind == LayerKind::Conv ? Shape{l.out, l.in, 3, 3}
                                                           : Shape{l.out, l.in};
            ck.params.weights[i] = make_tensor<float>(wshape);
            ck.params.biases[i] = make_tensor<float>(Shape{l.out});
            expected.emplace_back(l.name + "/weight", ck.params.weights[i]);
            expected.emplace_back(l.name + "/bias", ck.params.biases[i]);
        }
        const std::uint32_t count = c.u32();
        if (count != expected.size())
            throw FormatError("expected " + std::to_string(expected.size()) +
                                  " parameter tensors, file has " + std::to_string(count),
                              c.offset());
        for (auto& [name, tensor] : expected) {
            const std::string got = c.str();
            if (got != name)
                throw FormatError("parameter name mismatch: expected " + name + ", got " + got,
                                  c.offset());
            const std::uint32_t ndim = c.u32();
            Shape shape(ndim);
            for (std::uint32_t j = 0; j < ndim; ++j) shape[j] = c.i64();
            if (shape != tensor->shape())
                throw FormatError("parameter " + name + " shape mismatch: expected " +
                                      shape_str(tensor->shape()) + ", got " + shape_str(shape),
                                  c.offset());
            c.f32v(tensor->data(), static_cast<std::size_t>(tensor->numel()));
        }
    }

    if (const Section* s = find("WHITEN")) {
        Cursor c(data, s->offset, s->length, "WHITEN");
        ck.has_whitening = true;
        ck.whitening.mean = c.f64();
        ck.whitening.std = c.f64();
    }
    if (const Section* s = find("INPCA")) {
        Cursor c(data, s->offset, s->length, "INPCA");
        ck.has_input_basis = true;
        PcaBasis& b = ck.input_basis;
        b.k = c.i64();
        b.d = c.i64();
        if (b.k < 0 || b.d < 0 || b.k > b.d)
            throw FormatError("implausible input-basis dimensions", c.offset());
        b.total_variance = c.f64();
        b.mean.resize(static_cast<std::size_t>(b.d));
        b.variances.resize(static_cast<std::size_t>(b.k));
        b.components.resize(static_cast<std::size_t>(b.k * b.d));
        c.f32v(b.mean.data(), b.mean.size());
        c.f32v(b.variances.data(), b.variances.size());
        c.f32v(b.components.data(), b.components.size());
    }
    if (const Section* s = find("OUTPCA")) {
        Cursor c(data, s->offset, s->length, "OUTPCA");
        ck.output_basis.present = true;
        ck.output_basis.k = c.i64();
        ck.output_basis.d = c.i64();
        ck.output_basis.total_variance = c.f64();
        ck.output_basis.variances.resize(static_cast<std::size_t>(ck.output_basis.k));
        c.f32v(ck.output_basis.variances.data(), ck.output_basis.variances.size());
    }
    if (const Section* s = find("ADAM")) {
        Cursor c(data, s->offset, s->length, "ADAM");
        ck.adam.present = true;
        ck.adam.t = c.i64();
        const std::uint32_t count = c.u32();
        ck.adam.m.resize(count);
        ck.adam.v.resize(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::uint64_t numel = c.u64();
            ck.adam.m[i].resize(numel);
            ck.adam.v[i].resize(numel);
            c.f32v(ck.adam.m[i].data(), numel);
            c.f32v(ck.adam.v[i].data(), numel);
        }
    }
    return ck;
}

} // namespace fcap
