#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "leap/eval.hpp"
#include "leap/taxonomy.hpp"
#include "leap/voxel_grid.hpp"

namespace leap::cli {

namespace fs = std::filesystem;

/// Bad invocation: missing inputs, unreadable layout, unknown flags.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PipelineConfig {
    fs::path taxonomy;
    fs::path dataset;
    fs::path output;
    double voxel_size = 0.2;
    double threshold = 0.25;
    std::size_t k = 9;
    double gap = 1.0;
    double eps = kDefaultProbabilityFloor;
    double tau = 1.0;              // camera-derived labels
    double tau_predictions = 1.0;  // external predictor
    double percent = 20.0;
    std::uint64_t seed = 0;
    int jobs = 0;
    EvalMode eval_mode = EvalMode::IgnoreUnlabeled;
    bool depth_filter = true;
    bool smooth = true;

    /// Throws ParameterError naming the offending field.
    void validate() const;
    nlohmann::json to_json() const;
};

/// Relative paths inside the file resolve against the file's directory.
PipelineConfig config_from_json(const nlohmann::json& j, const fs::path& base = {});
PipelineConfig load_config(const fs::path& path);

/// Number of frames `000000<ext>`, `000001<ext>`, ... in `dir`. Throws UsageError when
/// the directory is missing or the numbering has holes.
std::size_t count_frames(const fs::path& dir, std::string_view extension);

// Pipeline stages. Each reads and writes files only, so chaining the commands by hand
// produces the same bytes as `run`.

void label2d_stage(const fs::path& regions_dir, const TaxonomyConfig& taxonomy, double threshold,
                   const fs::path& out_dir);

/// With `regions_dir` set, masks are rebuilt from the region files and used for depth
/// filtering with `gap`.
void paint_stage(const fs::path& clouds_dir, const fs::path& ppm_dir, const fs::path& calib_path,
                 const std::optional<fs::path>& regions_dir, const TaxonomyConfig& taxonomy, double threshold,
                 double gap, const fs::path& out_dir);

SparseVoxelGrid fuse_stage(const fs::path& painted_dir, const fs::path& poses_path, double voxel_size,
                           const FusionParams& params, const fs::path& out_grid);

void smooth_stage(const fs::path& in_grid, std::size_t k, const fs::path& out_grid);

void export_labels_stage(const fs::path& grid_path, const fs::path& clouds_dir, const fs::path& poses_path,
                         const fs::path& out_dir, Label ignore_label, bool ply);

void select_reliable_stage(const fs::path& grid_path, const fs::path& clouds_dir, const fs::path& poses_path,
                           double percent, const fs::path& out_dir, Label ignore_label);

/// Predictions are LPCL painted clouds or, when none exist, `.label` files paired with
/// `clouds_dir` and fused as one-hot distributions.
void fuse_preds_stage(const fs::path& in_grid, const fs::path& preds_dir, const std::optional<fs::path>& clouds_dir,
                      const fs::path& poses_path, const FusionParams& params, const fs::path& out_grid,
                      Label ignore_label);

EvalReport eval_stage(const fs::path& gt_dir, const fs::path& pred_dir, const TaxonomyConfig& taxonomy,
                      EvalMode mode, bool merge, const fs::path& out_json);

struct SynthOptions {
    std::size_t frames = 20;
    double noise = 0.0;
    double peak = 1.0;
    std::uint64_t seed = 0;
    std::optional<fs::path> scene;
    std::optional<fs::path> sensor;
    std::optional<fs::path> taxonomy;
};

void synth_stage(const fs::path& out_dir, const SynthOptions& options);

/// label2d, paint, fuse, smooth (optional), export-labels and, when ground truth is
/// present, eval. Writes a manifest of every parameter to the output root.
void run_pipeline(const PipelineConfig& config);

/// Writes `{"command":..., "parameters":...}` next to the outputs.
void write_manifest(const fs::path& path, std::string_view command, const nlohmann::json& parameters);

/// Entry point shared by the executable and tests. Returns the process exit code:
/// 0 on success, 1 on a runtime error, 2 on a usage error.
int main_entry(int argc, const char* const* argv);
int main_entry(const std::vector<std::string>& args);

}  // namespace leap::cli
