#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "leap/taxonomy.hpp"

namespace leap {

enum class EvalMode {
    /// Points predicted as ignore are skipped (the labeled-points-only comparison).
    IgnoreUnlabeled,
    /// Points predicted as ignore count as errors for their ground-truth class.
    CountAsWrong,
};

EvalMode parse_eval_mode(const std::string& text);
std::string to_string(EvalMode mode);

/// Rows are ground truth, columns predictions. An extra column collects points that
/// were left unlabeled in CountAsWrong mode.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t num_classes);

    std::size_t num_classes() const { return num_classes_; }
    std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * (num_classes_ + 1) + pred]; }
    std::uint64_t unlabeled(std::size_t gt) const { return at(gt, num_classes_); }
    std::uint64_t ignored() const { return ignored_; }
    std::uint64_t total() const;

    void add(std::size_t gt, std::size_t pred, std::uint64_t n = 1);
    void add_unlabeled(std::size_t gt, std::uint64_t n = 1);
    void add_ignored(std::uint64_t n = 1) { ignored_ += n; }

    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t num_classes_;
    std::vector<std::uint64_t> counts_;
    std::uint64_t ignored_ = 0;
};

/// Tallies one scan. Throws DimensionError on a length mismatch or a label that is
/// neither a class nor `ignore_label`.
void accumulate(ConfusionMatrix& cm, const std::vector<Label>& gt, const std::vector<Label>& pred, EvalMode mode,
                Label ignore_label = kDefaultIgnoreLabel);

/// Per-class TP / (TP + FP + FN); nullopt where the denominator is zero.
std::vector<std::optional<double>> iou(const ConfusionMatrix& cm);
/// Mean of the defined IoUs, in percent. Throws UndefinedMetricError when none is defined.
double miou(const ConfusionMatrix& cm);

/// Re-bins classes by the taxonomy's category map and takes the mIoU of the result.
ConfusionMatrix rebin(const ConfusionMatrix& cm, const std::vector<std::size_t>& class_to_group,
                      std::size_t num_groups);
double category_miou(const ConfusionMatrix& cm, const ClassTaxonomy& taxonomy);

/// Applies the taxonomy's merge map to a label vector; other labels pass through.
std::vector<Label> apply_merge_map(const std::vector<Label>& labels, const ClassTaxonomy& taxonomy);

struct EvalReport {
    std::vector<std::optional<double>> class_iou;
    double miou = 0.0;
    std::optional<double> category_miou;
    /// Fraction of points with a prediction other than ignore.
    double labeled_fraction = 0.0;
    std::uint64_t evaluated_points = 0;
    std::uint64_t total_points = 0;

    nlohmann::json to_json(const ClassTaxonomy& taxonomy) const;
};

EvalReport make_report(const ConfusionMatrix& cm, const ClassTaxonomy& taxonomy, std::uint64_t labeled_points,
                       std::uint64_t total_points);

}  // namespace leap
