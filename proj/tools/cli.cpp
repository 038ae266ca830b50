#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <regex>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "leap/error.hpp"
#include "leap/geometry.hpp"
#include "leap/io.hpp"
#include "leap/label2d.hpp"
#include "leap/painting.hpp"
#include "leap/parallel.hpp"
#include "leap/reliable.hpp"
#include "leap/synth.hpp"

namespace leap::cli {

namespace {

std::shared_ptr<spdlog::logger> logger() {
    if (auto existing = spdlog::get("leap")) return existing;
    auto log = spdlog::stderr_color_mt("leap");
    log->set_pattern("[%l] %v");
    spdlog::level::level_enum level = spdlog::level::info;
    if (const char* env = std::getenv("LEAP_LOG")) {
        level = spdlog::level::from_str(env);
        // from_str maps unknown names to "off"; only honor it when asked for.
        if (level == spdlog::level::off && std::string_view(env) != "off") level = spdlog::level::info;
    }
    log->set_level(level);
    return log;
}

void require_file(const fs::path& path, std::string_view what) {
    if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + ": no such file " + path.string());
}

void require_dir(const fs::path& path, std::string_view what) {
    if (!fs::is_directory(path)) throw UsageError(std::string(what) + ": no such directory " + path.string());
}

std::vector<RigidTransform> load_poses_for(const fs::path& poses_path, std::size_t frames) {
    require_file(poses_path, "poses");
    auto poses = read_poses(poses_path);
    if (poses.size() < frames)
        throw FormatError("poses: " + std::to_string(poses.size()) + " poses for " + std::to_string(frames) +
                          " frames");
    return poses;
}

template <typename F>
void for_each_frame(std::size_t frames, F&& body) {
    ExceptionSlot errors;
    const auto n = static_cast<std::ptrdiff_t>(frames);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t f = 0; f < n; ++f) errors.run([&] { body(static_cast<std::size_t>(f)); });
    errors.rethrow();
}

double get_double(const nlohmann::json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) throw ParameterError(std::string(key) + ": expected a number");
    return j.at(key).get<double>();
}

}  // namespace

void PipelineConfig::validate() const {
    if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) throw ParameterError("voxel_size: must be positive");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ParameterError("threshold: must lie in (0, 1)");
    if (k < 1) throw ParameterError("k: must be >= 1");
    if (!(gap > 0.0)) throw ParameterError("gap: must be positive");
    if (!(eps > 0.0 && eps < 1.0)) throw ParameterError("eps: must lie in (0, 1)");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ParameterError("tau: must be positive");
    if (!(tau_predictions > 0.0) || !std::isfinite(tau_predictions))
        throw ParameterError("tau_predictions: must be positive");
    if (!(percent > 0.0 && percent <= 100.0)) throw ParameterError("percent: must lie in (0, 100]");
    if (jobs < 0) throw ParameterError("jobs: must be >= 0");
}

nlohmann::json PipelineConfig::to_json() const {
    return {
        {"taxonomy", taxonomy.string()},
        {"dataset", dataset.string()},
        {"output", output.string()},
        {"voxel_size", voxel_size},
        {"threshold", threshold},
        {"k", k},
        {"gap", gap},
        {"eps", eps},
        {"tau", tau},
        {"tau_predictions", tau_predictions},
        {"percent", percent},
        {"seed", seed},
        {"jobs", jobs},
        {"eval_mode", to_string(eval_mode)},
        {"depth_filter", depth_filter},
        {"smooth", smooth},
    };
}

PipelineConfig config_from_json(const nlohmann::json& j, const fs::path& base) {
    if (!j.is_object()) throw ParameterError("config: expected a JSON object");
    static const std::vector<std::string> known = {
        "taxonomy", "dataset", "output", "voxel_size", "threshold", "k",         "gap",          "eps",
        "tau",      "tau_predictions",   "percent",    "seed",      "jobs",      "eval_mode",    "depth_filter",
        "smooth"};
    for (const auto& [key, value] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ParameterError(key + ": unknown configuration key");

    PipelineConfig c;
    auto path = [&](const char* key) -> fs::path {
        if (!j.contains(key)) return {};
        fs::path p = j.at(key).get<std::string>();
        return p.is_relative() && !base.empty() ? base / p : p;
    };
    try {
        c.taxonomy = path("taxonomy");
        c.dataset = path("dataset");
        c.output = path("output");
        c.voxel_size = get_double(j, "voxel_size", c.voxel_size);
        c.threshold = get_double(j, "threshold", c.threshold);
        if (j.contains("k")) {
            const auto k = j.at("k").get<std::int64_t>();
            if (k < 1) throw ParameterError("k: must be >= 1");
            c.k = static_cast<std::size_t>(k);
        }
        c.gap = get_double(j, "gap", c.gap);
        c.eps = get_double(j, "eps", c.eps);
        c.tau = get_double(j, "tau", c.tau);
        c.tau_predictions = get_double(j, "tau_predictions", c.tau_predictions);
        c.percent = get_double(j, "percent", c.percent);
        c.seed = j.value("seed", c.seed);
        c.jobs = j.value("jobs", c.jobs);
        if (j.contains("eval_mode")) c.eval_mode = parse_eval_mode(j.at("eval_mode").get<std::string>());
        c.depth_filter = j.value("depth_filter", c.depth_filter);
        c.smooth = j.value("smooth", c.smooth);
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    require_file(path, "config");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParameterError("config: " + std::string(e.what()));
    }
    return config_from_json(j, path.parent_path());
}

std::size_t count_frames(const fs::path& dir, std::string_view extension) {
    require_dir(dir, "frames");
    static const std::regex frame_re(R"(^(\d{6})$)");
    std::vector<std::size_t> indices;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != extension) continue;
        const std::string stem = entry.path().stem().string();
        std::smatch m;
        if (std::regex_match(stem, m, frame_re)) indices.push_back(std::stoul(m[1].str()));
    }
    std::sort(indices.begin(), indices.end());
    for (std::size_t i = 0; i < indices.size(); ++i)
        if (indices[i] != i)
            throw UsageError(dir.string() + ": frame " + frame_name(i, extension) + " is missing");
    return indices.size();
}

void label2d_stage(const fs::path& regions_dir, const TaxonomyConfig& taxonomy, double threshold,
                   const fs::path& out_dir) {
    const std::size_t frames = count_frames(regions_dir, ".json");
    logger()->info("label2d: {} frames", frames);
    for_each_frame(frames, [&](std::size_t f) {
        const auto file = read_region_file(regions_dir / frame_name(f, ".json"));
        const auto result = assemble_pixel_labels(file, taxonomy.prompts, threshold);
        write_pixel_prob_map(out_dir / frame_name(f, ".lppm"), result.map);
    });
}

void paint_stage(const fs::path& clouds_dir, const fs::path& ppm_dir, const fs::path& calib_path,
                 const std::optional<fs::path>& regions_dir, const TaxonomyConfig& taxonomy, double threshold,
                 double gap, const fs::path& out_dir) {
    const std::size_t frames = count_frames(clouds_dir, ".bin");
    const std::size_t maps = count_frames(ppm_dir, ".lppm");
    if (maps < frames)
        throw UsageError("paint: " + std::to_string(maps) + " probability maps for " + std::to_string(frames) +
                         " clouds");
    require_file(calib_path, "calib");
    const Calibration calib = read_calibration(calib_path);
    logger()->info("paint: {} frames, depth filter {}", frames, regions_dir ? "on" : "off");
    for_each_frame(frames, [&](std::size_t f) {
        const auto cloud = read_point_cloud(clouds_dir / frame_name(f, ".bin"));
        const auto ppm = read_pixel_prob_map(ppm_dir / frame_name(f, ".lppm"));
        const auto proj = project(cloud, calib.cam_from_lidar, calib.intrinsics(ppm.width(), ppm.height()));
        PaintedCloud painted;
        if (regions_dir) {
            const auto file = read_region_file(*regions_dir / frame_name(f, ".json"));
            if (file.width != ppm.width() || file.height != ppm.height())
                throw DimensionError("paint: region file and probability map differ in size at frame " +
                                     std::to_string(f));
            const auto masks = assemble_pixel_labels(file, taxonomy.prompts, threshold).masks;
            painted = paint_filtered(cloud, ppm, proj, masks, gap);
        } else {
            painted = paint(cloud, ppm, proj);
        }
        write_painted_cloud(out_dir / frame_name(f, ".lpcl"), painted);
    });
}

SparseVoxelGrid fuse_stage(const fs::path& painted_dir, const fs::path& poses_path, double voxel_size,
                           const FusionParams& params, const fs::path& out_grid) {
    const std::size_t frames = count_frames(painted_dir, ".lpcl");
    if (frames == 0) throw UsageError("fuse: no painted clouds in " + painted_dir.string());
    const auto poses = load_poses_for(poses_path, frames);
    std::optional<SparseVoxelGrid> grid;
    std::size_t fused = 0;
    for (std::size_t f = 0; f < frames; ++f) {
        const auto painted = read_painted_cloud(painted_dir / frame_name(f, ".lpcl"));
        if (!grid) grid.emplace(voxel_size, painted.num_classes);
        if (painted.num_classes != grid->num_classes())
            throw DimensionError("fuse: frame " + std::to_string(f) + " has a different class count");
        fused += fuse_painted_cloud(*grid, painted, poses[f], params);
    }
    logger()->info("fuse: {} observations into {} voxels", fused, grid->size());
    save_grid(*grid, out_grid);
    return std::move(*grid);
}

void smooth_stage(const fs::path& in_grid, std::size_t k, const fs::path& out_grid) {
    require_file(in_grid, "grid");
    const auto grid = load_grid(in_grid);
    logger()->info("smooth: {} voxels, k = {}", grid.size(), k);
    save_grid(smooth(grid, k), out_grid);
}

void export_labels_stage(const fs::path& grid_path, const fs::path& clouds_dir, const fs::path& poses_path,
                         const fs::path& out_dir, Label ignore_label, bool ply) {
    require_file(grid_path, "grid");
    const auto grid = load_grid(grid_path);
    const std::size_t frames = count_frames(clouds_dir, ".bin");
    const auto poses = load_poses_for(poses_path, frames);
    const Palette palette = default_palette(grid.num_classes());
    logger()->info("export-labels: {} frames", frames);
    for_each_frame(frames, [&](std::size_t f) {
        const auto cloud = read_point_cloud(clouds_dir / frame_name(f, ".bin"));
        const auto result = query_labels(grid, cloud, poses[f], ignore_label);
        std::vector<Label> labels(result.size());
        std::vector<float> confidences(result.size());
        for (std::size_t i = 0; i < result.size(); ++i) {
            labels[i] = result[i].label;
            confidences[i] = static_cast<float>(result[i].confidence);
        }
        write_labels(out_dir / frame_name(f, ".label"), labels);
        write_confidences(out_dir / frame_name(f, ".conf"), confidences);
        if (ply) export_ply(out_dir / frame_name(f, ".ply"), cloud, labels, palette, ignore_label);
    });
}

void select_reliable_stage(const fs::path& grid_path, const fs::path& clouds_dir, const fs::path& poses_path,
                           double percent, const fs::path& out_dir, Label ignore_label) {
    require_file(grid_path, "grid");
    const auto grid = load_grid(grid_path);
    const std::size_t frames = count_frames(clouds_dir, ".bin");
    const auto poses = load_poses_for(poses_path, frames);
    std::vector<Scan> scans(frames);
    for (std::size_t f = 0; f < frames; ++f)
        scans[f] = {read_point_cloud(clouds_dir / frame_name(f, ".bin")), poses[f]};
    const auto selection = select_reliable(grid, scans, percent);
    logger()->info("select-reliable: {} of the labeled points kept at {}%", selection.total(), percent);
    for (std::size_t f = 0; f < frames; ++f)
        export_selection(out_dir / frame_name(f, ".label"), out_dir / frame_name(f, ".json"), f, selection,
                         scans[f].cloud.points.size(), ignore_label);
}

void fuse_preds_stage(const fs::path& in_grid, const fs::path& preds_dir, const std::optional<fs::path>& clouds_dir,
                      const fs::path& poses_path, const FusionParams& params, const fs::path& out_grid,
                      Label ignore_label) {
    require_file(in_grid, "grid");
    auto grid = load_grid(in_grid);
    const std::size_t c = grid.num_classes();
    std::size_t frames = count_frames(preds_dir, ".lpcl");
    const bool painted = frames > 0;
    if (!painted) {
        frames = count_frames(preds_dir, ".label");
        if (!clouds_dir) throw UsageError("fuse-preds: label predictions need --clouds");
    }
    if (frames == 0) throw UsageError("fuse-preds: no predictions in " + preds_dir.string());
    const auto poses = load_poses_for(poses_path, frames);
    std::vector<Prediction> preds(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        auto& pred = preds[f];
        pred.world_from_sensor = poses[f];
        if (painted) {
            pred.cloud = read_painted_cloud(preds_dir / frame_name(f, ".lpcl"));
            continue;
        }
        const auto cloud = read_point_cloud(*clouds_dir / frame_name(f, ".bin"));
        const auto labels = read_labels(preds_dir / frame_name(f, ".label"), cloud.points.size());
        pred.cloud.points = cloud.points;
        pred.cloud.num_classes = c;
        pred.cloud.labels.resize(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == ignore_label) continue;
            if (labels[i] >= c) throw DimensionError("fuse-preds: label " + std::to_string(labels[i]) +
                                                     " is not a class (frame " + std::to_string(f) + ")");
            pred.cloud.labels[i] = ClassDistribution::one_hot(c, labels[i]);
        }
    }
    const std::size_t fused = fuse_predictions(grid, preds, params);
    logger()->info("fuse-preds: {} predictions fused", fused);
    save_grid(grid, out_grid);
}

EvalReport eval_stage(const fs::path& gt_dir, const fs::path& pred_dir, const TaxonomyConfig& taxonomy,
                      EvalMode mode, bool merge, const fs::path& out_json) {
    const std::size_t frames = count_frames(gt_dir, ".label");
    const std::size_t pred_frames = count_frames(pred_dir, ".label");
    if (pred_frames != frames)
        throw UsageError("eval: " + std::to_string(pred_frames) + " prediction files for " +
                         std::to_string(frames) + " ground-truth files");
    const auto& tax = taxonomy.taxonomy;
    ConfusionMatrix cm(tax.num_classes());
    std::uint64_t labeled = 0;
    std::uint64_t total = 0;
    for (std::size_t f = 0; f < frames; ++f) {
        auto gt = read_labels(gt_dir / frame_name(f, ".label"));
        auto pred = read_labels(pred_dir / frame_name(f, ".label"), gt.size());
        if (merge) {
            gt = apply_merge_map(gt, tax);
            pred = apply_merge_map(pred, tax);
        }
        total += pred.size();
        labeled += static_cast<std::uint64_t>(
            std::count_if(pred.begin(), pred.end(), [&](Label l) { return l != tax.ignore_label; }));
        accumulate(cm, gt, pred, mode, tax.ignore_label);
    }
    const auto report = make_report(cm, tax, labeled, total);
    auto j = report.to_json(tax);
    j["eval_mode"] = to_string(mode);
    j["frames"] = frames;
    write_file_atomic(out_json, j.dump(2) + "\n");
    logger()->info("eval: mIoU {:.2f} over {} points", report.miou, report.evaluated_points);
    return report;
}

void synth_stage(const fs::path& out_dir, const SynthOptions& options) {
    auto read_json = [](const fs::path& path) {
        require_file(path, "synth input");
        try {
            return nlohmann::json::parse(read_file(path));
        } catch (const nlohmann::json::parse_error& e) {
            throw ParameterError(path.string() + ": " + e.what());
        }
    };
    const TaxonomyConfig taxonomy =
        options.taxonomy ? (require_file(*options.taxonomy, "taxonomy"), load_taxonomy(*options.taxonomy))
                         : synth::default_taxonomy();
    const synth::SceneSpec scene =
        options.scene ? synth::scene_from_json(read_json(*options.scene)) : synth::default_scene(options.seed);
    const synth::SensorSpec sensor = options.sensor ? synth::sensor_from_json(read_json(*options.sensor))
                                                    : synth::default_sensor(options.frames);
    logger()->info("synth: {} frames, noise {}, peak {}", sensor.trajectory.size(), options.noise, options.peak);
    synth::write_dataset(out_dir, taxonomy, scene, sensor, {options.noise, options.peak, options.seed});
}

void write_manifest(const fs::path& path, std::string_view command, const nlohmann::json& parameters) {
    nlohmann::json j;
    j["command"] = command;
    j["parameters"] = parameters;
    write_file_atomic(path, j.dump(2) + "\n");
}

void run_pipeline(const PipelineConfig& config) {
    config.validate();
    if (config.dataset.empty()) throw UsageError("run: dataset is required");
    if (config.output.empty()) throw UsageError("run: output is required");
    require_dir(config.dataset, "dataset");
    const fs::path tax_path = config.taxonomy.empty() ? config.dataset / "taxonomy.json" : config.taxonomy;
    require_file(tax_path, "taxonomy");
    const TaxonomyConfig taxonomy = load_taxonomy(tax_path);
    const fs::path& data = config.dataset;
    const fs::path& out = config.output;
    const FusionParams params{config.tau, config.eps};
    params.validate(taxonomy.taxonomy.num_classes());

    label2d_stage(data / "regions", taxonomy, config.threshold, out / "ppm");
    const std::optional<fs::path> regions =
        config.depth_filter ? std::optional<fs::path>(data / "regions") : std::nullopt;
    paint_stage(data / "velodyne", out / "ppm", data / "calib.txt", regions, taxonomy, config.threshold, config.gap,
                out / "painted");
    fuse_stage(out / "painted", data / "poses.txt", config.voxel_size, params, out / "grid.lvox");
    fs::path final_grid = out / "grid.lvox";
    if (config.smooth) {
        smooth_stage(final_grid, config.k, out / "grid_smoothed.lvox");
        final_grid = out / "grid_smoothed.lvox";
    }
    export_labels_stage(final_grid, data / "velodyne", data / "poses.txt", out / "labels",
                        taxonomy.taxonomy.ignore_label, false);
    nlohmann::json stages = {"label2d", "paint", "fuse"};
    if (config.smooth) stages.push_back("smooth");
    stages.push_back("export-labels");
    if (fs::is_directory(data / "labels")) {
        eval_stage(data / "labels", out / "labels", taxonomy, config.eval_mode, false, out / "report.json");
        stages.push_back("eval");
    }
    auto params_json = config.to_json();
    params_json["taxonomy"] = tax_path.string();
    params_json["stages"] = stages;
    write_manifest(out / "manifest.json", "run", params_json);
}

namespace {

// Flag overrides shared across subcommands; unset flags leave the config untouched.
struct Overrides {
    std::optional<std::string> config;
    std::optional<double> voxel_size;
    std::optional<double> threshold;
    std::optional<std::size_t> k;
    std::optional<double> gap;
    std::optional<double> tau;
    std::optional<double> percent;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::optional<std::string> eval_mode;
};

enum Flag : unsigned {
    kVoxel = 1u << 0,
    kThreshold = 1u << 1,
    kK = 1u << 2,
    kGap = 1u << 3,
    kTau = 1u << 4,
    kPercent = 1u << 5,
    kSeed = 1u << 6,
    kEvalMode = 1u << 7,
};

void add_flags(CLI::App* app, Overrides& o, unsigned flags) {
    app->add_option("--config", o.config, "Pipeline configuration file (JSON); flags override it");
    app->add_option("--jobs", o.jobs, "Worker threads (0 = all cores)");
    if (flags & kVoxel) app->add_option("--voxel-size", o.voxel_size, "Voxel edge length in meters");
    if (flags & kThreshold) app->add_option("--threshold", o.threshold, "Region similarity threshold");
    if (flags & kK) app->add_option("--k", o.k, "Smoothing neighbors per voxel");
    if (flags & kGap) app->add_option("--gap", o.gap, "Depth-cluster gap in meters");
    if (flags & kTau) app->add_option("--tau", o.tau, "Observation temperature");
    if (flags & kPercent) app->add_option("--percent", o.percent, "Reliable-label percentage per class");
    if (flags & kSeed) app->add_option("--seed", o.seed, "Random seed");
    if (flags & kEvalMode) app->add_option("--eval-mode", o.eval_mode, "ignore-unlabeled or count-as-wrong");
}

PipelineConfig resolve(const Overrides& o) {
    PipelineConfig c = o.config ? load_config(*o.config) : PipelineConfig{};
    if (o.voxel_size) c.voxel_size = *o.voxel_size;
    if (o.threshold) c.threshold = *o.threshold;
    if (o.k) c.k = *o.k;
    if (o.gap) c.gap = *o.gap;
    if (o.tau) c.tau = *o.tau;
    if (o.percent) c.percent = *o.percent;
    if (o.seed) c.seed = *o.seed;
    if (o.jobs) c.jobs = *o.jobs;
    if (o.eval_mode) c.eval_mode = parse_eval_mode(*o.eval_mode);
    c.validate();
    set_thread_count(c.jobs);
    return c;
}

TaxonomyConfig taxonomy_for(const std::optional<std::string>& flag, const PipelineConfig& config) {
    const fs::path path = flag ? fs::path(*flag) : config.taxonomy;
    if (path.empty()) throw UsageError("--taxonomy is required");
    require_file(path, "taxonomy");
    return load_taxonomy(path);
}

Label ignore_for(const std::optional<std::string>& flag, const PipelineConfig& config) {
    if (!flag && config.taxonomy.empty()) return kDefaultIgnoreLabel;
    return taxonomy_for(flag, config).taxonomy.ignore_label;
}

}  // namespace

int main_entry(int argc, const char* const* argv) {
    CLI::App app{"Semantic pseudo-labels from 2D region proposals and LiDAR sequences"};
    app.require_subcommand(1);
    Overrides o;
    std::optional<std::string> taxonomy;
    std::string in;
    std::string in2;
    std::string out;
    std::string clouds;
    std::string poses;
    std::optional<std::string> regions;
    std::optional<std::string> clouds_opt;
    std::string calib;
    bool ply = false;
    bool merge = false;
    SynthOptions synth_opts;
    std::optional<std::string> scene_path;
    std::optional<std::string> sensor_path;
    std::optional<std::string> dataset;
    std::optional<std::string> output;

    auto* label2d = app.add_subcommand("label2d", "Region files to per-pixel probability maps");
    label2d->add_option("--regions", in, "Directory of region files")->required();
    label2d->add_option("--taxonomy", taxonomy, "Taxonomy file");
    label2d->add_option("--out", out, "Output directory for probability maps")->required();
    add_flags(label2d, o, kThreshold);

    auto* paint_cmd = app.add_subcommand("paint", "Paint clouds with probability maps");
    paint_cmd->add_option("--clouds", clouds, "Directory of .bin clouds")->required();
    paint_cmd->add_option("--ppm", in, "Directory of probability maps")->required();
    paint_cmd->add_option("--calib", calib, "Calibration file")->required();
    paint_cmd->add_option("--regions", regions, "Region files; enables per-mask depth filtering");
    paint_cmd->add_option("--taxonomy", taxonomy, "Taxonomy file (needed with --regions)");
    paint_cmd->add_option("--out", out, "Output directory for painted clouds")->required();
    add_flags(paint_cmd, o, kThreshold | kGap);

    auto* fuse_cmd = app.add_subcommand("fuse", "Fuse painted clouds into a voxel grid");
    fuse_cmd->add_option("--painted", in, "Directory of painted clouds")->required();
    fuse_cmd->add_option("--poses", poses, "Poses file")->required();
    fuse_cmd->add_option("--out", out, "Output grid file")->required();
    add_flags(fuse_cmd, o, kVoxel | kTau);

    auto* smooth_cmd = app.add_subcommand("smooth", "Distance-weighted k-nearest smoothing of a grid");
    smooth_cmd->add_option("--grid", in, "Input grid file")->required();
    smooth_cmd->add_option("--out", out, "Output grid file")->required();
    add_flags(smooth_cmd, o, kK);

    auto* export_cmd = app.add_subcommand("export-labels", "Per-point labels from a grid");
    export_cmd->add_option("--grid", in, "Grid file")->required();
    export_cmd->add_option("--clouds", clouds, "Directory of .bin clouds")->required();
    export_cmd->add_option("--poses", poses, "Poses file")->required();
    export_cmd->add_option("--taxonomy", taxonomy, "Taxonomy file (for its ignore label)");
    export_cmd->add_option("--out", out, "Output directory")->required();
    export_cmd->add_flag("--ply", ply, "Also write colored PLY files");
    add_flags(export_cmd, o, 0);

    auto* select_cmd = app.add_subcommand("select-reliable", "Most confident labels per class");
    select_cmd->add_option("--grid", in, "Grid file")->required();
    select_cmd->add_option("--clouds", clouds, "Directory of .bin clouds")->required();
    select_cmd->add_option("--poses", poses, "Poses file")->required();
    select_cmd->add_option("--taxonomy", taxonomy, "Taxonomy file (for its ignore label)");
    select_cmd->add_option("--out", out, "Output directory")->required();
    add_flags(select_cmd, o, kPercent);

    auto* preds_cmd = app.add_subcommand("fuse-preds", "Fuse external predictions into a grid");
    preds_cmd->add_option("--grid", in, "Input grid file")->required();
    preds_cmd->add_option("--preds", in2, "Directory of .lpcl or .label predictions")->required();
    preds_cmd->add_option("--clouds", clouds_opt, "Directory of .bin clouds (for .label predictions)");
    preds_cmd->add_option("--poses", poses, "Poses file")->required();
    preds_cmd->add_option("--taxonomy", taxonomy, "Taxonomy file (for its ignore label)");
    preds_cmd->add_option("--out", out, "Output grid file")->required();
    add_flags(preds_cmd, o, kVoxel | kTau);

    auto* eval_cmd = app.add_subcommand("eval", "IoU report of predicted against ground-truth labels");
    eval_cmd->add_option("--gt", in, "Ground-truth label directory")->required();
    eval_cmd->add_option("--pred", in2, "Predicted label directory")->required();
    eval_cmd->add_option("--taxonomy", taxonomy, "Taxonomy file");
    eval_cmd->add_option("--out", out, "Report file (JSON)")->required();
    eval_cmd->add_flag("--merge", merge, "Apply the taxonomy's merge map to both sides");
    add_flags(eval_cmd, o, kEvalMode);

    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic labeled dataset");
    synth_cmd->add_option("--out", out, "Dataset root")->required();
    synth_cmd->add_option("--frames", synth_opts.frames, "Frames on the default loop trajectory");
    synth_cmd->add_option("--noise", synth_opts.noise, "Class-flip probability per pixel");
    synth_cmd->add_option("--peak", synth_opts.peak, "Probability on the emitted class");
    synth_cmd->add_option("--scene", scene_path, "Scene spec (JSON); default is a seeded layout");
    synth_cmd->add_option("--sensor", sensor_path, "Sensor spec (JSON); default is a looped rig");
    synth_cmd->add_option("--taxonomy", taxonomy, "Taxonomy file; default is the six-class set");
    add_flags(synth_cmd, o, kSeed);

    auto* run_cmd = app.add_subcommand("run", "Whole pipeline from one configuration");
    run_cmd->add_option("--dataset", dataset, "Dataset root");
    run_cmd->add_option("--out", output, "Output root");
    run_cmd->add_option("--taxonomy", taxonomy, "Taxonomy file (default: <dataset>/taxonomy.json)");
    add_flags(run_cmd, o, kVoxel | kThreshold | kK | kGap | kTau | kPercent | kSeed | kEvalMode);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const PipelineConfig config = resolve(o);
        nlohmann::json params = config.to_json();
        const fs::path out_path = out;
        if (*label2d) {
            const auto tax = taxonomy_for(taxonomy, config);
            label2d_stage(in, tax, config.threshold, out_path);
            params["regions"] = in;
            write_manifest(out_path / "manifest.json", "label2d", params);
        } else if (*paint_cmd) {
            const auto tax = regions || taxonomy || !config.taxonomy.empty() ? taxonomy_for(taxonomy, config)
                                                                             : TaxonomyConfig{};
            const std::optional<fs::path> regions_dir =
                regions ? std::optional<fs::path>(*regions) : std::nullopt;
            paint_stage(clouds, in, calib, regions_dir, tax, config.threshold, config.gap, out_path);
            params["depth_filter"] = regions.has_value();
            write_manifest(out_path / "manifest.json", "paint", params);
        } else if (*fuse_cmd) {
            fuse_stage(in, poses, config.voxel_size, {config.tau, config.eps}, out_path);
            write_manifest(fs::path(out + ".manifest.json"), "fuse", params);
        } else if (*smooth_cmd) {
            smooth_stage(in, config.k, out_path);
            write_manifest(fs::path(out + ".manifest.json"), "smooth", params);
        } else if (*export_cmd) {
            export_labels_stage(in, clouds, poses, out_path, ignore_for(taxonomy, config), ply);
            write_manifest(out_path / "manifest.json", "export-labels", params);
        } else if (*select_cmd) {
            select_reliable_stage(in, clouds, poses, config.percent, out_path, ignore_for(taxonomy, config));
            write_manifest(out_path / "manifest.json", "select-reliable", params);
        } else if (*preds_cmd) {
            const std::optional<fs::path> cd = clouds_opt ? std::optional<fs::path>(*clouds_opt) : std::nullopt;
            // --tau names the prediction source's temperature here.
            const double tau = o.tau ? config.tau : config.tau_predictions;
            fuse_preds_stage(in, in2, cd, poses, {tau, config.eps}, out_path, ignore_for(taxonomy, config));
            params["tau_predictions"] = tau;
            write_manifest(fs::path(out + ".manifest.json"), "fuse-preds", params);
        } else if (*eval_cmd) {
            TaxonomyConfig tax = taxonomy_for(taxonomy, config);
            eval_stage(in, in2, tax, config.eval_mode, merge, out_path);
        } else if (*synth_cmd) {
            synth_opts.seed = config.seed;
            if (scene_path) synth_opts.scene = fs::path(*scene_path);
            if (sensor_path) synth_opts.sensor = fs::path(*sensor_path);
            if (taxonomy) synth_opts.taxonomy = fs::path(*taxonomy);
            synth_stage(out_path, synth_opts);
            params["frames"] = synth_opts.frames;
            params["noise"] = synth_opts.noise;
            params["peak"] = synth_opts.peak;
            write_manifest(out_path / "manifest.json", "synth", params);
        } else if (*run_cmd) {
            PipelineConfig run_config = config;
            if (dataset) run_config.dataset = *dataset;
            if (output) run_config.output = *output;
            if (taxonomy) run_config.taxonomy = *taxonomy;
            run_pipeline(run_config);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

int main_entry(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("leap");
    for (const auto& a : args) argv.push_back(a.c_str());
    return main_entry(static_cast<int>(argv.size()), argv.data());
}

}  // namespace leap::cli
