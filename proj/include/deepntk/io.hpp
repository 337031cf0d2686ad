#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "deepntk/cnn.hpp"
#include "deepntk/dynamics.hpp"
#include "deepntk/errors.hpp"
#include "deepntk/mlp.hpp"

namespace deepntk {

/// Points (cos g, sin g) on the open quarter circle with targets x1 * x2.
/// Gridded angles are (k + 1) pi / (2 (n + 1)); otherwise uniform draws.
Dataset generate_toy_dataset(int n, std::uint64_t seed, bool gridded = false);

/// Angles of a gridded quarter-circle set, in the same order as the points.
std::vector<double> quarter_circle_angles(int n);

/// Raw IDX payload. Images are count x rows x cols bytes; labels may be empty.
struct IdxDataset {
    std::uint32_t count = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<std::uint8_t> pixels;
    std::vector<std::uint8_t> labels;
};

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

IdxDataset read_idx(const std::filesystem::path& image_path, const std::filesystem::path& label_path);
std::vector<std::uint8_t> read_idx_images(const std::filesystem::path& path, std::uint32_t& count,
                                          std::uint32_t& rows, std::uint32_t& cols);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path, std::uint32_t& count);
void write_idx(const IdxDataset& data, const std::filesystem::path& image_path,
               const std::filesystem::path& label_path);

enum class TargetMode { OneHot, Binary };

struct IdxOptions {
    int limit = 0;                  // 0 keeps every (filtered) image
    bool pre_pool = false;          // 4x4 average pool, 28x28 -> 7x7
    std::vector<int> classes;       // empty keeps all digits
    TargetMode target_mode = TargetMode::OneHot;
    double positive_eps = 0.0;      // added to every pixel after scaling
};

/// Images become columns (column-major pixels, image_side set); pixels are
/// scaled to [0, 1]. Binary mode maps the smallest listed class to 0 and
/// every other class to 1. One-hot targets span the listed classes (or 0..9).
Dataset load_idx_dataset(const std::filesystem::path& image_path,
                         const std::filesystem::path& label_path, const IdxOptions& options);

/// Average pool with a k x k window and stride k.
Eigen::MatrixXd block_average(const Eigen::MatrixXd& image, int k);

// --- checkpoints ---------------------------------------------------------

constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointVersionError : public DataError {
public:
    using DataError::DataError;
};

using AnyParams = std::variant<MlpParams, CnnParams>;

/// Little-endian binary: magic "DNTK", version, kind, config, tensors, draws.
void save_checkpoint(const AnyParams& params, const std::filesystem::path& path);
AnyParams load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_checkpoint(const AnyParams& params);
AnyParams deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

// --- CSV -----------------------------------------------------------------

/// Shortest round-trip decimal form, independent of the C locale.
std::string format_double(double v);

using Cell = std::variant<std::int64_t, double, std::string>;

struct ResultTable {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    std::size_t column(const std::string& name) const;
    double number(std::size_t row, const std::string& name) const;
};

/// Comment lines first ("# " prefix), then the header row and the data rows.
std::string render_csv(const ResultTable& table, const std::vector<std::string>& comments);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

/// Text after "# config: " in the leading comment block of a CSV.
std::string extract_config_comment(const std::string& csv);

}  // namespace deepntk
