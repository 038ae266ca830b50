#include "leap/reliable.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "leap/error.hpp"
#include "leap/io.hpp"

namespace leap {

std::size_t ReliableSelection::total() const {
    std::size_t n = 0;
    for (const auto& s : scans) n += s.size();
    return n;
}

ReliableSelection select_reliable(const SparseVoxelGrid& grid, const std::vector<Scan>& scans, double percent) {
    if (!(percent > 0.0 && percent <= 100.0)) throw ParameterError("percent: must lie in (0, 100]");

    struct Candidate {
        double confidence;
        std::size_t scan;
        std::size_t point;
    };
    const std::size_t c = grid.num_classes();
    std::vector<std::vector<PointLabel>> labels(scans.size());
    for (std::size_t s = 0; s < scans.size(); ++s)
        labels[s] = query_labels(grid, scans[s].cloud, scans[s].world_from_sensor, kDefaultIgnoreLabel);

    std::vector<std::vector<Candidate>> per_class(c);
    for (std::size_t s = 0; s < scans.size(); ++s)
        for (std::size_t i = 0; i < labels[s].size(); ++i) {
            const auto& pl = labels[s][i];
            if (pl.label >= c) continue;
            per_class[pl.label].push_back({pl.confidence, s, i});
        }

    ReliableSelection out;
    out.percent = percent;
    out.scans.resize(scans.size());
    for (std::size_t cls = 0; cls < c; ++cls) {
        auto& pool = per_class[cls];
        if (pool.empty()) continue;
        // Guard the product against rounding up past an integer (e.g. 20% of 10).
        const double exact = percent / 100.0 * static_cast<double>(pool.size());
        auto keep = static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
        keep = std::min(std::max<std::size_t>(keep, 1), pool.size());
        auto better = [](const Candidate& a, const Candidate& b) {
            if (a.confidence != b.confidence) return a.confidence > b.confidence;
            if (a.scan != b.scan) return a.scan < b.scan;
            return a.point < b.point;
        };
        std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(), better);
        for (std::size_t j = 0; j < keep; ++j)
            out.scans[pool[j].scan].push_back({pool[j].point, static_cast<Label>(cls), pool[j].confidence});
    }
    for (auto& scan : out.scans)
        std::sort(scan.begin(), scan.end(),
                  [](const ReliableLabel& a, const ReliableLabel& b) { return a.point_index < b.point_index; });
    return out;
}

std::size_t fuse_predictions(SparseVoxelGrid& grid, const std::vector<Prediction>& preds,
                             const FusionParams& params) {
    std::size_t fused = 0;
    for (const auto& pred : preds) fused += fuse_painted_cloud(grid, pred.cloud, pred.world_from_sensor, params);
    return fused;
}

std::vector<Label> selection_labels(const std::vector<ReliableLabel>& selected, std::size_t num_points,
                                    Label ignore_label) {
    std::vector<Label> labels(num_points, ignore_label);
    for (const auto& r : selected) {
        if (r.point_index >= num_points) throw DimensionError("selected point index exceeds the scan");
        labels[r.point_index] = r.label;
    }
    return labels;
}

void export_selection(const std::filesystem::path& label_path, const std::filesystem::path& sidecar_path,
                      std::size_t scan_index, const ReliableSelection& selection, std::size_t num_points,
                      Label ignore_label) {
    const auto& selected = selection.scans.at(scan_index);
    write_labels(label_path, selection_labels(selected, num_points, ignore_label));
    nlohmann::json j;
    j["scan"] = scan_index;
    j["percent"] = selection.percent;
    j["indices"] = nlohmann::json::array();
    j["labels"] = nlohmann::json::array();
    j["confidences"] = nlohmann::json::array();
    for (const auto& r : selected) {
        j["indices"].push_back(r.point_index);
        j["labels"].push_back(r.label);
        j["confidences"].push_back(r.confidence);
    }
    write_file_atomic(sidecar_path, j.dump(1));
}

}  // namespace leap
