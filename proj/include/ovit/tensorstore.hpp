#pragma once

// Named tensor container with the OVPT on-disk layout:
//
//   "OVPT" | u32 version (=1) | u32 tensor count |
//   per tensor: u32 name length | name bytes | u8 dtype | u32 ndim |
//               ndim x u64 dims | raw little-endian data
//
// All integers are little-endian. Tensors are flattened row-major; that order
// is the global weight index order used by every pruner.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace ovit {

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8_mask = 2 };

inline const char* dtype_name(DType t) {
    switch (t) {
        case DType::f32: return "f32";
        case DType::f64: return "f64";
        case DType::u8_mask: return "u8-mask";
    }
    return "?";
}

class StoreError : public std::runtime_error {
public:
    enum class Kind { io, bad_magic, unsupported_version, truncated, unknown_dtype, invalid };

    StoreError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class Tensor {
public:
    using Storage = std::variant<std::vector<float>, std::vector<double>, std::vector<std::uint8_t>>;

    Tensor() : dims_{1}, data_(std::vector<double>{0.0}) {}

    static Tensor f32(std::vector<std::uint64_t> dims, std::vector<float> values) {
        return Tensor(std::move(dims), std::move(values));
    }
    static Tensor f64(std::vector<std::uint64_t> dims, std::vector<double> values) {
        return Tensor(std::move(dims), std::move(values));
    }
    static Tensor mask(std::vector<std::uint64_t> dims, std::vector<std::uint8_t> values) {
        return Tensor(std::move(dims), std::move(values));
    }

    DType dtype() const noexcept { return static_cast<DType>(data_.index()); }
    const std::vector<std::uint64_t>& dims() const noexcept { return dims_; }
    const Storage& storage() const noexcept { return data_; }

    std::size_t size() const {
        return std::visit([](const auto& v) { return v.size(); }, data_);
    }

    template <typename T>
    const std::vector<T>& values() const {
        return std::get<std::vector<T>>(data_);
    }

    /// Element values widened to double, in row-major order.
    std::vector<double> to_doubles() const {
        return std::visit(
            [](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, data_);
    }

    Eigen::VectorXd to_vector() const {
        const auto d = to_doubles();
        return Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
    }

    /// Rebuilds a tensor of the same dtype and shape from double values.
    Tensor with_values(const Eigen::VectorXd& v) const {
        if (static_cast<std::size_t>(v.size()) != size())
            throw std::invalid_argument("with_values: element count mismatch");
        switch (dtype()) {
            case DType::f32: return f32(dims_, std::vector<float>(v.begin(), v.end()));
            case DType::f64: return f64(dims_, std::vector<double>(v.begin(), v.end()));
            case DType::u8_mask: {
                std::vector<std::uint8_t> m(v.size());
                std::transform(v.begin(), v.end(), m.begin(), [](double x) { return x != 0.0 ? 1 : 0; });
                return mask(dims_, std::move(m));
            }
        }
        throw std::logic_error("unreachable dtype");
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        if (a.dtype() != b.dtype() || a.dims_ != b.dims_ || a.size() != b.size()) return false;
        return std::visit(
            [&](const auto& va) {
                using V = std::decay_t<decltype(va)>;
                const auto& vb = std::get<V>(b.data_);
                return va.empty() ||
                       std::memcmp(va.data(), vb.data(), va.size() * sizeof(typename V::value_type)) == 0;
            },
            a.data_);
    }

private:
    Tensor(std::vector<std::uint64_t> dims, Storage data) : dims_(std::move(dims)), data_(std::move(data)) {
        validate();
    }

    void validate() const {
        if (dims_.empty()) throw StoreError(StoreError::Kind::invalid, "tensor dims must be non-empty");
        std::uint64_t count = 1;
        for (auto d : dims_) {
            if (d == 0) throw StoreError(StoreError::Kind::invalid, "tensor dimension of size 0");
            count *= d;
        }
        if (count != size())
            throw StoreError(StoreError::Kind::invalid, "tensor element count does not match dims");
        if (dtype() == DType::u8_mask) {
            for (auto m : values<std::uint8_t>())
                if (m > 1) throw StoreError(StoreError::Kind::invalid, "mask values must be 0 or 1");
        }
    }

    std::vector<std::uint64_t> dims_;
    Storage data_;
};

/// Ordered name -> tensor map. Iteration follows insertion order.
class TensorContainer {
public:
    using Entry = std::pair<std::string, Tensor>;

    std::uint32_t version = 1;

    void insert(std::string name, Tensor t) {
        if (contains(name)) throw StoreError(StoreError::Kind::invalid, "duplicate tensor name '" + name + "'");
        entries_.emplace_back(std::move(name), std::move(t));
    }

    /// Replaces an existing entry in place or appends a new one.
    void set(const std::string& name, Tensor t) {
        for (auto& e : entries_)
            if (e.first == name) {
                e.second = std::move(t);
                return;
            }
        entries_.emplace_back(name, std::move(t));
    }

    bool contains(std::string_view name) const { return find(name) != nullptr; }

    const Tensor* find(std::string_view name) const {
        for (const auto& e : entries_)
            if (e.first == name) return &e.second;
        return nullptr;
    }

    const Tensor& at(std::string_view name) const {
        if (const auto* t = find(name)) return *t;
        throw StoreError(StoreError::Kind::invalid, "no tensor named '" + std::string(name) + "'");
    }

    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    friend bool operator==(const TensorContainer& a, const TensorContainer& b) {
        return a.version == b.version && a.entries_ == b.entries_;
    }

private:
    std::vector<Entry> entries_;
};

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
    out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get(const std::string& context) {
        need(sizeof(T), context);
        unsigned char raw[sizeof(T)];
        std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(raw), std::end(raw));
        pos_ += sizeof(T);
        T value;
        std::memcpy(&value, raw, sizeof(T));
        return value;
    }

    std::string_view take(std::size_t n, const std::string& context) {
        need(n, context);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const std::string& context) const {
        if (bytes_.size() - pos_ < n) throw StoreError(StoreError::Kind::truncated, "truncated file: " + context);
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

template <typename T>
std::vector<T> read_values(Reader& r, std::uint64_t count, const std::string& context) {
    if (count > r.remaining() / sizeof(T)) throw StoreError(StoreError::Kind::truncated, "truncated file: " + context);
    std::vector<T> out(count);
    for (auto& v : out) v = r.get<T>(context);
    return out;
}

}  // namespace detail

inline constexpr char kMagic[4] = {'O', 'V', 'P', 'T'};
inline constexpr std::uint32_t kFormatVersion = 1;

inline std::string serialize(const TensorContainer& c) {
    std::string out(kMagic, 4);
    detail::put_le<std::uint32_t>(out, kFormatVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.size()));
    for (const auto& [name, t] : c.entries()) {
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.append(name);
        detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype()));
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims().size()));
        for (auto d : t.dims()) detail::put_le<std::uint64_t>(out, d);
        std::visit([&](const auto& v) { for (auto x : v) detail::put_le(out, x); }, t.storage());
    }
    return out;
}

inline TensorContainer deserialize(std::string_view bytes) {
    using K = StoreError::Kind;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw StoreError(K::bad_magic, "bad magic: not an OVPT container");
    detail::Reader r(bytes.substr(4));
    TensorContainer c;
    c.version = r.get<std::uint32_t>("header");
    if (c.version != kFormatVersion)
        throw StoreError(K::unsupported_version, "unsupported OVPT version " + std::to_string(c.version));
    const auto count = r.get<std::uint32_t>("header");
    for (std::uint32_t n = 0; n < count; ++n) {
        const std::string where = "tensor #" + std::to_string(n);
        const auto len = r.get<std::uint32_t>(where + " name length");
        std::string name(r.take(len, where + " name"));
        const std::string ctx = "tensor '" + name + "'";
        const auto code = r.get<std::uint8_t>(ctx + " dtype");
        if (code > 2) throw StoreError(K::unknown_dtype, "unknown dtype code " + std::to_string(code) + " in " + ctx);
        const auto ndim = r.get<std::uint32_t>(ctx + " rank");
        if (ndim > r.remaining() / sizeof(std::uint64_t)) throw StoreError(K::truncated, "truncated file: " + ctx + " dims");
        std::vector<std::uint64_t> dims(ndim);
        std::uint64_t total = 1;
        for (auto& d : dims) {
            d = r.get<std::uint64_t>(ctx + " dims");
            if (d != 0 && total > UINT64_MAX / d) throw StoreError(K::invalid, ctx + ": dims overflow");
            total *= d;
        }
        if (ndim == 0 || total == 0) throw StoreError(K::invalid, ctx + ": empty or zero-sized dims");
        const std::string dctx = ctx + " data";
        switch (static_cast<DType>(code)) {
            case DType::f32: c.insert(name, Tensor::f32(dims, detail::read_values<float>(r, total, dctx))); break;
            case DType::f64: c.insert(name, Tensor::f64(dims, detail::read_values<double>(r, total, dctx))); break;
            case DType::u8_mask:
                c.insert(name, Tensor::mask(dims, detail::read_values<std::uint8_t>(r, total, dctx)));
                break;
        }
    }
    return c;
}

inline void write_container(const std::string& path, const TensorContainer& c) {
    const auto bytes = serialize(c);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw StoreError(StoreError::Kind::io, "cannot open '" + path + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw StoreError(StoreError::Kind::io, "write failed for '" + path + "'");
}

inline TensorContainer read_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw StoreError(StoreError::Kind::io, "cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) throw StoreError(StoreError::Kind::io, "read failed for '" + path + "'");
    try {
        return deserialize(bytes);
    } catch (const StoreError& e) {
        throw StoreError(e.kind(), path + ": " + e.what());
    }
}

// Layer naming convention: layer.<id>.{weight,grads,mask,prunable}

inline std::string weight_key(std::string_view id) { return "layer." + std::string(id) + ".weight"; }
inline std::string grads_key(std::string_view id) { return "layer." + std::string(id) + ".grads"; }
inline std::string mask_key(std::string_view id) { return "layer." + std::string(id) + ".mask"; }
inline std::string prunable_key(std::string_view id) { return "layer." + std::string(id) + ".prunable"; }

/// Layer ids in container order, taken from "layer.<id>.weight" entries.
inline std::vector<std::string> layer_ids(const TensorContainer& c) {
    std::vector<std::string> ids;
    constexpr std::string_view prefix = "layer.", suffix = ".weight";
    for (const auto& [name, t] : c.entries()) {
        if (name.size() > prefix.size() + suffix.size() && name.starts_with(prefix) && name.ends_with(suffix))
            ids.push_back(name.substr(prefix.size(), name.size() - prefix.size() - suffix.size()));
    }
    return ids;
}

/// Per-sample gradients of one layer: row i is the flattened gradient of sample i.
struct GradientSet {
    std::string layer;
    Eigen::MatrixXd samples;

    Eigen::Index count() const { return samples.rows(); }
    Eigen::Index dim() const { return samples.cols(); }

    static GradientSet from_tensor(std::string layer, const Tensor& t) {
        if (t.dtype() == DType::u8_mask) throw StoreError(StoreError::Kind::invalid, layer + ": gradients must be f32/f64");
        if (t.dims().size() != 2) throw StoreError(StoreError::Kind::invalid, layer + ": gradients must have shape [N, d]");
        const auto v = t.to_doubles();
        const auto n = static_cast<Eigen::Index>(t.dims()[0]);
        const auto d = static_cast<Eigen::Index>(t.dims()[1]);
        GradientSet g{std::move(layer), Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), n, d)};
        return g;
    }

    Tensor to_tensor() const {
        std::vector<double> v(static_cast<std::size_t>(samples.size()));
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), samples.rows(), samples.cols()) = samples;
        return Tensor::f64({static_cast<std::uint64_t>(samples.rows()), static_cast<std::uint64_t>(samples.cols())}, std::move(v));
    }
};

}  // namespace ovit
