#include "spikegrid/model_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace spikegrid {

namespace {

constexpr std::array<char, 4> kMagic{'N', 'S', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

class ByteWriter {
public:
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u8(std::uint8_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void f64s(const double* p, std::size_t n) { raw(p, n * sizeof(double)); }

    const std::vector<unsigned char>& bytes() const { return buf_; }

private:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    std::vector<unsigned char> buf_;
};

class ByteReader {
public:
    ByteReader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

    std::uint32_t u32() { return read<std::uint32_t>(); }
    std::uint8_t u8() { return read<std::uint8_t>(); }
    double f64() { return read<double>(); }
    void f64s(double* out, std::size_t n) {
        need(n * sizeof(double));
        std::memcpy(out, data_ + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
    }
    bool exhausted() const { return pos_ == size_; }

private:
    template <typename T>
    T read() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_ + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void need(std::size_t n) {
        if (pos_ + n > size_) throw ModelIoError("model file truncated");
    }
    const unsigned char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t size) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xffffffffu;
    for (std::size_t i = 0; i < size; ++i)
        crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

void save_model(const ModelBundle& bundle, const std::string& path) {
    ByteWriter w;
    w.u32(kVersion);
    w.f64(bundle.tick_dt);
    w.u32(static_cast<std::uint32_t>(bundle.nodes.size()));
    for (const auto& node : bundle.nodes) {
        w.u32(static_cast<std::uint32_t>(node.node_id));
        w.u32(static_cast<std::uint32_t>(node.remote_ids.size()));
        for (Index id : node.remote_ids) w.u32(static_cast<std::uint32_t>(id));

        const auto& m = node.model;
        w.u32(static_cast<std::uint32_t>(m.shape.widths.size()));
        for (Index width : m.shape.widths) w.u32(static_cast<std::uint32_t>(width));
        w.f64(m.neuron.tau_m);
        w.f64(m.neuron.tau_syn);
        w.f64(m.neuron.tau_ref);
        w.f64(m.neuron.threshold);
        w.u8(m.trained ? 1 : 0);
        w.f64(m.decode_tau);
        for (const auto& weights : m.weights) {
            Matrix<double> row_major = weights;  // stored row by row
            for (Index r = 0; r < row_major.rows(); ++r)
                w.f64s(row_major.row(r).eval().data(),
                       static_cast<std::size_t>(row_major.cols()));
        }
        w.u32(static_cast<std::uint32_t>(m.decode_scale.size()));
        w.f64s(m.decode_scale.data(), static_cast<std::size_t>(m.decode_scale.size()));
        w.f64s(m.decode_offset.data(), static_cast<std::size_t>(m.decode_offset.size()));

        w.u32(static_cast<std::uint32_t>(node.encoder.neurons_per_feature));
        w.f64(node.encoder.tuning_width);
        for (const auto& [lo, hi] : node.encoder.ranges) {
            w.f64(lo);
            w.f64(hi);
        }
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelIoError("cannot open model file for writing: " + path);
    out.write(kMagic.data(), kMagic.size());
    const auto& payload = w.bytes();
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    std::uint32_t crc = crc32(payload.data(), payload.size());
    out.write(reinterpret_cast<const char*>(&crc), sizeof crc);
    if (!out) throw ModelIoError("failed writing model file: " + path);
}

ModelBundle load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelIoError("cannot open model file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < kMagic.size() + sizeof(std::uint32_t) * 2)
        throw ModelIoError("model file truncated");
    if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
        throw ModelIoError("bad magic: not a model file");

    const std::size_t payload_size = bytes.size() - kMagic.size() - sizeof(std::uint32_t);
    const unsigned char* payload = bytes.data() + kMagic.size();
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, payload + payload_size, sizeof stored_crc);
    if (crc32(payload, payload_size) != stored_crc)
        throw ModelIoError("model file checksum mismatch");

    ByteReader r(payload, payload_size);
    std::uint32_t version = r.u32();
    if (version != kVersion)
        throw ModelIoError("unsupported model format version " + std::to_string(version));

    ModelBundle bundle;
    bundle.tick_dt = r.f64();
    std::uint32_t node_count = r.u32();
    for (std::uint32_t n = 0; n < node_count; ++n) {
        NodeModel node;
        node.node_id = static_cast<Index>(r.u32());
        std::uint32_t remote_count = r.u32();
        for (std::uint32_t i = 0; i < remote_count; ++i)
            node.remote_ids.push_back(static_cast<Index>(r.u32()));

        auto& m = node.model;
        std::uint32_t layer_count = r.u32();
        if (layer_count < 2) throw ModelIoError("model shape has fewer than 2 layers");
        for (std::uint32_t i = 0; i < layer_count; ++i)
            m.shape.widths.push_back(static_cast<Index>(r.u32()));
        m.neuron.tau_m = r.f64();
        m.neuron.tau_syn = r.f64();
        m.neuron.tau_ref = r.f64();
        m.neuron.threshold = r.f64();
        m.trained = r.u8() != 0;
        m.decode_tau = r.f64();
        for (std::size_t p = 0; p < m.shape.pairs(); ++p) {
            Matrix<double> w(m.shape.widths[p + 1], m.shape.widths[p]);
            std::vector<double> row(static_cast<std::size_t>(w.cols()));
            for (Index i = 0; i < w.rows(); ++i) {
                r.f64s(row.data(), row.size());
                for (Index j = 0; j < w.cols(); ++j)
                    w(i, j) = row[static_cast<std::size_t>(j)];
            }
            m.weights.push_back(std::move(w));
        }
        std::uint32_t outs = r.u32();
        if (static_cast<Index>(outs) != m.shape.output_width())
            throw ModelIoError("calibration width mismatch");
        m.decode_scale.resize(outs);
        m.decode_offset.resize(outs);
        r.f64s(m.decode_scale.data(), outs);
        r.f64s(m.decode_offset.data(), outs);
        m.reset_state();

        node.encoder.neurons_per_feature = static_cast<Index>(r.u32());
        node.encoder.tuning_width = r.f64();
        for (auto& [lo, hi] : node.encoder.ranges) {
            lo = r.f64();
            hi = r.f64();
        }
        if (node.encoder.width() != m.shape.input_width())
            throw ModelIoError("encoder width does not match network input width");
        bundle.nodes.push_back(std::move(node));
    }
    if (!r.exhausted()) throw ModelIoError("trailing bytes in model file");
    return bundle;
}

}  // namespace spikegrid
