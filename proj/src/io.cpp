#include "deepntk/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "deepntk/errors.hpp"
#include "deepntk/rng.hpp"

namespace deepntk {

namespace fs = std::filesystem;

// --- toy data ------------------------------------------------------------

std::vector<double> quarter_circle_angles(int n) {
    if (n < 1) throw ConfigError("toy dataset needs at least one point");
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) out[static_cast<std::size_t>(k)] = (k + 1) * std::numbers::pi / (2.0 * (n + 1));
    return out;
}

Dataset generate_toy_dataset(int n, std::uint64_t seed, bool gridded) {
    if (n < 1) throw ConfigError("toy dataset needs at least one point");
    std::vector<double> angles;
    if (gridded) {
        angles = quarter_circle_angles(n);
    } else {
        auto stream = make_stream(seed, 0, StreamRole::Dataset);
        std::uniform_real_distribution<double> dist(0.0, std::numbers::pi / 2.0);
        while (static_cast<int>(angles.size()) < n) {
            const double g = dist(stream);
            if (g > 0.0) angles.push_back(g);
        }
    }
    Dataset data;
    data.inputs.resize(2, n);
    data.targets.resize(1, n);
    for (int k = 0; k < n; ++k) {
        const double g = angles[static_cast<std::size_t>(k)];
        data.inputs(0, k) = std::cos(g);
        data.inputs(1, k) = std::sin(g);
        data.targets(0, k) = data.inputs(0, k) * data.inputs(1, k);
    }
    return data;
}

// --- IDX -----------------------------------------------------------------

namespace {

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
           (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) b.push_back(static_cast<std::uint8_t>(v >> shift));
}

}  // namespace

std::vector<std::uint8_t> read_idx_images(const fs::path& path, std::uint32_t& count,
                                          std::uint32_t& rows, std::uint32_t& cols) {
    const auto bytes = read_bytes(path);
    if (bytes.size() < 16) throw DataError(path.string() + ": truncated IDX header");
    if (read_be32(bytes, 0) != kIdxImageMagic) throw DataError(path.string() + ": bad image magic");
    count = read_be32(bytes, 4);
    rows = read_be32(bytes, 8);
    cols = read_be32(bytes, 12);
    const std::uint64_t payload = std::uint64_t{count} * rows * cols;
    if (bytes.size() - 16 != payload) throw DataError(path.string() + ": truncated or oversized image payload");
    return {bytes.begin() + 16, bytes.end()};
}

std::vector<std::uint8_t> read_idx_labels(const fs::path& path, std::uint32_t& count) {
    const auto bytes = read_bytes(path);
    if (bytes.size() < 8) throw DataError(path.string() + ": truncated IDX header");
    if (read_be32(bytes, 0) != kIdxLabelMagic) throw DataError(path.string() + ": bad label magic");
    count = read_be32(bytes, 4);
    if (bytes.size() - 8 != count) throw DataError(path.string() + ": truncated or oversized label payload");
    return {bytes.begin() + 8, bytes.end()};
}

IdxDataset read_idx(const fs::path& image_path, const fs::path& label_path) {
    IdxDataset out;
    out.pixels = read_idx_images(image_path, out.count, out.rows, out.cols);
    std::uint32_t n_labels = 0;
    out.labels = read_idx_labels(label_path, n_labels);
    if (n_labels != out.count) throw DataError("image and label counts differ");
    return out;
}

void write_idx(const IdxDataset& data, const fs::path& image_path, const fs::path& label_path) {
    if (data.pixels.size() != std::size_t{data.count} * data.rows * data.cols) {
        throw DataError("pixel payload does not match the declared dimensions");
    }
    if (data.labels.size() != data.count) throw DataError("label payload does not match the count");
    std::vector<std::uint8_t> img;
    img.reserve(16 + data.pixels.size());
    put_be32(img, kIdxImageMagic);
    put_be32(img, data.count);
    put_be32(img, data.rows);
    put_be32(img, data.cols);
    img.insert(img.end(), data.pixels.begin(), data.pixels.end());
    write_bytes(image_path, img);

    std::vector<std::uint8_t> lab;
    put_be32(lab, kIdxLabelMagic);
    put_be32(lab, data.count);
    lab.insert(lab.end(), data.labels.begin(), data.labels.end());
    write_bytes(label_path, lab);
}

Eigen::MatrixXd block_average(const Eigen::MatrixXd& image, int k) {
    require_config(k >= 1, "pool size must be positive");
    require_shape(image.rows() % k == 0 && image.cols() % k == 0, "image side must be divisible by the pool size");
    Eigen::MatrixXd out(image.rows() / k, image.cols() / k);
    for (Eigen::Index j = 0; j < out.cols(); ++j)
        for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = image.block(i * k, j * k, k, k).mean();
    return out;
}

Dataset load_idx_dataset(const fs::path& image_path, const fs::path& label_path, const IdxOptions& options) {
    if (options.limit < 0) throw ConfigError("limit must be non-negative");
    if (options.positive_eps < 0.0) throw ConfigError("positive_eps must be non-negative");
    for (int c : options.classes) require_config(c >= 0 && c <= 9, "classes must be digits 0..9");
    const IdxDataset raw = read_idx(image_path, label_path);
    if (raw.rows != raw.cols) throw DataError("images must be square");

    std::vector<int> classes = options.classes;
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.empty()) {
        for (int c = 0; c <= 9; ++c) classes.push_back(c);
    }
    if (options.target_mode == TargetMode::Binary && classes.size() != 2) {
        throw ConfigError("binary targets need exactly two classes");
    }

    std::vector<std::uint32_t> picked;
    for (std::uint32_t n = 0; n < raw.count; ++n) {
        if (std::binary_search(classes.begin(), classes.end(), static_cast<int>(raw.labels[n]))) {
            picked.push_back(n);
            if (options.limit > 0 && static_cast<int>(picked.size()) == options.limit) break;
        }
    }
    if (picked.empty()) throw DataError("no images left after filtering");

    const int side_in = static_cast<int>(raw.rows);
    if (options.pre_pool && side_in % 4 != 0) throw DataError("pre-pool needs a side divisible by 4");
    const int side = options.pre_pool ? side_in / 4 : side_in;
    const auto n = static_cast<Eigen::Index>(picked.size());

    Dataset data;
    data.image_side = side;
    data.inputs.resize(static_cast<Eigen::Index>(side) * side, n);
    const int d_out = options.target_mode == TargetMode::Binary ? 1 : static_cast<int>(classes.size());
    data.targets = Eigen::MatrixXd::Zero(d_out, n);

    const std::size_t stride = std::size_t{raw.rows} * raw.cols;
    for (Eigen::Index k = 0; k < n; ++k) {
        const std::uint32_t idx = picked[static_cast<std::size_t>(k)];
        Eigen::MatrixXd img(side_in, side_in);
        const std::uint8_t* px = raw.pixels.data() + idx * stride;
        for (int r = 0; r < side_in; ++r)
            for (int c = 0; c < side_in; ++c) img(r, c) = px[r * side_in + c] / 255.0;
        if (options.pre_pool) img = block_average(img, 4);
        img.array() += options.positive_eps;
        data.inputs.col(k) = Eigen::Map<const Eigen::VectorXd>(img.data(), img.size());

        const int label = raw.labels[idx];
        const auto pos = std::lower_bound(classes.begin(), classes.end(), label) - classes.begin();
        if (options.target_mode == TargetMode::Binary) {
            data.targets(0, k) = pos == 0 ? 0.0 : 1.0;
        } else {
            data.targets(pos, k) = 1.0;
        }
    }
    return data;
}

// --- checkpoints ---------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'N', 'T', 'K'};
constexpr std::uint8_t kKindMlp = 1;
constexpr std::uint8_t kKindCnn = 2;

class Writer {
public:
    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void doubles(const double* p, std::size_t n) {
        u64(n);
        for (std::size_t i = 0; i < n; ++i) f64(p[i]);
    }

    std::vector<std::uint8_t> bytes;

private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::vector<double> doubles(std::uint64_t expected) {
        const std::uint64_t n = u64();
        if (n != expected) throw DataError("corrupt checkpoint: tensor size mismatch");
        need(n * 8);
        std::vector<double> out(n);
        for (auto& v : out) v = f64();
        return out;
    }
    bool done() const { return at_ == bytes_.size(); }

private:
    void need(std::uint64_t n) const {
        if (n > bytes_.size() - at_) throw DataError("corrupt checkpoint: unexpected end of file");
    }
    std::uint64_t le(int n) {
        need(static_cast<std::uint64_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{bytes_[at_++]} << (8 * i);
        return v;
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t at_ = 0;
};

void write_matrix(Writer& w, const Eigen::MatrixXd& m) {
    w.u64(static_cast<std::uint64_t>(m.rows()));
    w.u64(static_cast<std::uint64_t>(m.cols()));
    w.doubles(m.data(), static_cast<std::size_t>(m.size()));
}

Eigen::MatrixXd read_matrix(Reader& r) {
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    if (rows > (1u << 30) || cols > (1u << 30)) throw DataError("corrupt checkpoint: absurd tensor shape");
    const auto data = r.doubles(rows * cols);
    return Eigen::Map<const Eigen::MatrixXd>(data.data(), static_cast<Eigen::Index>(rows),
                                             static_cast<Eigen::Index>(cols));
}

void write_vector(Writer& w, const Eigen::VectorXd& v) { w.doubles(v.data(), static_cast<std::size_t>(v.size())); }

Eigen::VectorXd read_vector(Reader& r, std::uint64_t n) {
    const auto data = r.doubles(n);
    return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(n));
}

void write_mlp(Writer& w, const MlpParams& p) {
    w.u8(kKindMlp);
    w.i32(p.config.d_in);
    w.i32(p.config.d_out);
    w.i32(p.config.depth);
    w.f64(p.config.c_l);
    w.f64(p.config.rho);
    w.f64(p.config.beta);
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        write_matrix(w, p.weights[l]);
        write_vector(w, p.biases[l]);
    }
    w.u64(p.init_u.size());
    for (std::size_t j = 0; j < p.init_u.size(); ++j) {
        w.doubles(p.init_u[j].data(), static_cast<std::size_t>(p.init_u[j].size()));
        w.f64(p.init_v[j]);
    }
}

MlpParams read_mlp(Reader& r) {
    MlpParams p;
    p.config.d_in = r.i32();
    p.config.d_out = r.i32();
    p.config.depth = r.i32();
    p.config.c_l = r.f64();
    p.config.rho = r.f64();
    p.config.beta = r.f64();
    try {
        p.config.validate();
    } catch (const ConfigError& e) {
        throw DataError(std::string("corrupt checkpoint: ") + e.what());
    }
    for (int l = 1; l <= p.config.depth; ++l) {
        p.weights.push_back(read_matrix(r));
        p.biases.push_back(read_vector(r, static_cast<std::uint64_t>(p.config.layer_width(l))));
    }
    const std::uint64_t draws = r.u64();
    if (draws != 0 && draws != static_cast<std::uint64_t>(p.config.depth - 1)) {
        throw DataError("corrupt checkpoint: draw count mismatch");
    }
    for (std::uint64_t j = 0; j < draws; ++j) {
        p.init_u.push_back(read_vector(r, static_cast<std::uint64_t>(p.config.d_in)).transpose());
        p.init_v.push_back(r.f64());
    }
    return p;
}

void write_cnn(Writer& w, const CnnParams& p) {
    w.u8(kKindCnn);
    w.i32(p.config.d);
    w.i32(p.config.depth);
    w.f64(p.config.c_l);
    w.f64(p.config.rho);
    w.f64(p.config.beta);
    for (std::size_t l = 0; l < p.filters.size(); ++l) {
        w.u32(static_cast<std::uint32_t>(p.filters[l].n_out));
        w.u32(static_cast<std::uint32_t>(p.filters[l].n_in));
        w.doubles(p.filters[l].taps.data(), p.filters[l].taps.size());
        write_vector(w, p.biases[l]);
    }
    w.u64(p.init_u.size());
    for (std::size_t j = 0; j < p.init_u.size(); ++j) {
        write_matrix(w, p.init_u[j]);
        w.f64(p.init_v[j]);
    }
}

CnnParams read_cnn(Reader& r) {
    CnnParams p;
    p.config.d = r.i32();
    p.config.depth = r.i32();
    p.config.c_l = r.f64();
    p.config.rho = r.f64();
    p.config.beta = r.f64();
    try {
        p.config.validate();
    } catch (const ConfigError& e) {
        throw DataError(std::string("corrupt checkpoint: ") + e.what());
    }
    for (int l = 1; l <= p.config.depth; ++l) {
        const int n_out = static_cast<int>(r.u32());
        const int n_in = static_cast<int>(r.u32());
        if (n_out != p.config.channels(l) || n_in != p.config.channels(l - 1)) {
            throw DataError("corrupt checkpoint: channel plan mismatch");
        }
        FilterBank bank(n_out, n_in);
        bank.taps = r.doubles(bank.taps.size());
        p.filters.push_back(std::move(bank));
        p.biases.push_back(read_vector(r, static_cast<std::uint64_t>(n_out)));
    }
    const std::uint64_t draws = r.u64();
    if (draws != 0 && draws != static_cast<std::uint64_t>(p.config.depth - 1)) {
        throw DataError("corrupt checkpoint: draw count mismatch");
    }
    for (std::uint64_t j = 0; j < draws; ++j) {
        const Eigen::MatrixXd u = read_matrix(r);
        if (u.rows() != 3 || u.cols() != 3) throw DataError("corrupt checkpoint: filter draw shape");
        p.init_u.push_back(u);
        p.init_v.push_back(r.f64());
    }
    return p;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const AnyParams& params) {
    Writer w;
    for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u32(kCheckpointVersion);
    std::visit(
        [&](const auto& p) {
            p.check_shapes();
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, MlpParams>) {
                write_mlp(w, p);
            } else {
                write_cnn(w, p);
            }
        },
        params);
    return std::move(w.bytes);
}

AnyParams deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    for (char c : kMagic) {
        if (r.u8() != static_cast<std::uint8_t>(c)) throw DataError("not a checkpoint file (bad magic)");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw CheckpointVersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                     std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint8_t kind = r.u8();
    AnyParams out;
    if (kind == kKindMlp) {
        out = read_mlp(r);
    } else if (kind == kKindCnn) {
        out = read_cnn(r);
    } else {
        throw DataError("corrupt checkpoint: unknown network kind");
    }
    if (!r.done()) throw DataError("corrupt checkpoint: trailing bytes");
    try {
        std::visit([](const auto& p) { p.check_shapes(); }, out);
    } catch (const ShapeError& e) {
        throw DataError(std::string("corrupt checkpoint: ") + e.what());
    }
    return out;
}

void save_checkpoint(const AnyParams& params, const fs::path& path) { write_bytes(path, serialize_checkpoint(params)); }

AnyParams load_checkpoint(const fs::path& path) { return deserialize_checkpoint(read_bytes(path)); }

// --- CSV -----------------------------------------------------------------

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::size_t ResultTable::column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw std::out_of_range("no column named " + name);
    return static_cast<std::size_t>(it - columns.begin());
}

double ResultTable::number(std::size_t row, const std::string& name) const {
    const Cell& c = rows.at(row).at(column(name));
    if (const auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
    if (const auto* d = std::get_if<double>(&c)) return *d;
    throw std::invalid_argument("column " + name + " is not numeric");
}

namespace {

std::string render_cell(const Cell& c) {
    if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
    const auto& s = std::get<std::string>(c);
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q += '"';
        q += ch;
    }
    return q + "\"";
}

}  // namespace

std::string render_csv(const ResultTable& table, const std::vector<std::string>& comments) {
    std::string out;
    for (const auto& c : comments) out += "# " + c + "\n";
    for (std::size_t k = 0; k < table.columns.size(); ++k) {
        if (k) out += ',';
        out += table.columns[k];
    }
    out += '\n';
    for (const auto& row : table.rows) {
        if (row.size() != table.columns.size()) throw ShapeError("row width differs from the header");
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (k) out += ',';
            out += render_cell(row[k]);
        }
        out += '\n';
    }
    return out;
}

void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string read_text_file(const fs::path& path) {
    const auto bytes = read_bytes(path);
    return {bytes.begin(), bytes.end()};
}

std::string extract_config_comment(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    const std::string key = "# config: ";
    while (std::getline(in, line)) {
        if (line.rfind('#', 0) != 0) break;
        if (line.rfind(key, 0) == 0) return line.substr(key.size());
    }
    throw DataError("no config comment found in the CSV header");
}

}  // namespace deepntk
