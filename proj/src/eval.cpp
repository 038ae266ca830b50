#include "leap/eval.hpp"

#include <numeric>

#include "leap/error.hpp"

namespace leap {

EvalMode parse_eval_mode(const std::string& text) {
    if (text == "ignore-unlabeled") return EvalMode::IgnoreUnlabeled;
    if (text == "count-as-wrong") return EvalMode::CountAsWrong;
    throw ParameterError("eval-mode: expected ignore-unlabeled or count-as-wrong, got '" + text + "'");
}

std::string to_string(EvalMode mode) {
    return mode == EvalMode::IgnoreUnlabeled ? "ignore-unlabeled" : "count-as-wrong";
}

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : num_classes_(num_classes), counts_(num_classes * (num_classes + 1), 0) {
    if (num_classes == 0) throw DimensionError("confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

void ConfusionMatrix::add(std::size_t gt, std::size_t pred, std::uint64_t n) {
    if (gt >= num_classes_ || pred >= num_classes_) throw DimensionError("class index outside the confusion matrix");
    counts_[gt * (num_classes_ + 1) + pred] += n;
}

void ConfusionMatrix::add_unlabeled(std::size_t gt, std::uint64_t n) {
    if (gt >= num_classes_) throw DimensionError("class index outside the confusion matrix");
    counts_[gt * (num_classes_ + 1) + num_classes_] += n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (other.num_classes_ != num_classes_) throw DimensionError("confusion matrices differ in size");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    ignored_ += other.ignored_;
    return *this;
}

void accumulate(ConfusionMatrix& cm, const std::vector<Label>& gt, const std::vector<Label>& pred, EvalMode mode,
                Label ignore_label) {
    if (gt.size() != pred.size()) throw DimensionError("ground truth and prediction lengths differ");
    const std::size_t c = cm.num_classes();
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] == ignore_label) {
            cm.add_ignored();
            continue;
        }
        if (gt[i] >= c) throw DimensionError("ground-truth label " + std::to_string(gt[i]) + " is not a class");
        if (pred[i] == ignore_label) {
            if (mode == EvalMode::IgnoreUnlabeled) {
                cm.add_ignored();
            } else {
                cm.add_unlabeled(gt[i]);
            }
            continue;
        }
        if (pred[i] >= c) throw DimensionError("predicted label " + std::to_string(pred[i]) + " is not a class");
        cm.add(gt[i], pred[i]);
    }
}

std::vector<std::optional<double>> iou(const ConfusionMatrix& cm) {
    const std::size_t c = cm.num_classes();
    std::vector<std::optional<double>> out(c);
    for (std::size_t k = 0; k < c; ++k) {
        const std::uint64_t tp = cm.at(k, k);
        std::uint64_t fp = 0;
        std::uint64_t fn = cm.unlabeled(k);
        for (std::size_t j = 0; j < c; ++j) {
            if (j == k) continue;
            fp += cm.at(j, k);
            fn += cm.at(k, j);
        }
        const std::uint64_t denom = tp + fp + fn;
        if (denom > 0) out[k] = static_cast<double>(tp) / static_cast<double>(denom);
    }
    return out;
}

double miou(const ConfusionMatrix& cm) {
    double sum = 0.0;
    std::size_t defined = 0;
    for (const auto& v : iou(cm)) {
        if (!v) continue;
        sum += *v;
        ++defined;
    }
    if (defined == 0) throw UndefinedMetricError("mIoU undefined: no class appears in ground truth or prediction");
    return 100.0 * sum / static_cast<double>(defined);
}

ConfusionMatrix rebin(const ConfusionMatrix& cm, const std::vector<std::size_t>& class_to_group,
                      std::size_t num_groups) {
    const std::size_t c = cm.num_classes();
    if (class_to_group.size() != c) throw DimensionError("group map must cover every class");
    ConfusionMatrix out(num_groups);
    for (std::size_t g = 0; g < c; ++g) {
        for (std::size_t p = 0; p < c; ++p)
            if (cm.at(g, p)) out.add(class_to_group[g], class_to_group[p], cm.at(g, p));
        if (cm.unlabeled(g)) out.add_unlabeled(class_to_group[g], cm.unlabeled(g));
    }
    out.add_ignored(cm.ignored());
    return out;
}

double category_miou(const ConfusionMatrix& cm, const ClassTaxonomy& taxonomy) {
    if (!taxonomy.has_categories()) throw TaxonomyError("taxonomy has no category map");
    std::vector<std::size_t> groups(cm.num_classes());
    for (std::size_t k = 0; k < groups.size(); ++k) {
        const auto it = taxonomy.categories.find(k);
        if (it == taxonomy.categories.end())
            throw TaxonomyError("class " + std::to_string(k) + " has no category");
        groups[k] = it->second;
    }
    return miou(rebin(cm, groups, taxonomy.num_categories()));
}

std::vector<Label> apply_merge_map(const std::vector<Label>& labels, const ClassTaxonomy& taxonomy) {
    std::vector<Label> out(labels);
    if (taxonomy.merge_map.empty()) return out;
    for (auto& l : out) {
        const auto it = taxonomy.merge_map.find(l);
        if (it != taxonomy.merge_map.end()) l = static_cast<Label>(it->second);
    }
    return out;
}

EvalReport make_report(const ConfusionMatrix& cm, const ClassTaxonomy& taxonomy, std::uint64_t labeled_points,
                       std::uint64_t total_points) {
    EvalReport r;
    r.class_iou = iou(cm);
    r.miou = miou(cm);
    if (taxonomy.has_categories()) r.category_miou = category_miou(cm, taxonomy);
    r.evaluated_points = cm.total();
    r.total_points = total_points;
    r.labeled_fraction = total_points ? static_cast<double>(labeled_points) / static_cast<double>(total_points) : 0.0;
    return r;
}

nlohmann::json EvalReport::to_json(const ClassTaxonomy& taxonomy) const {
    nlohmann::json j;
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t k = 0; k < class_iou.size(); ++k) {
        const std::string name = k < taxonomy.classes.size() ? taxonomy.classes[k] : std::to_string(k);
        per_class[name] = class_iou[k] ? nlohmann::json(100.0 * *class_iou[k]) : nlohmann::json(nullptr);
    }
    j["class_iou"] = per_class;
    j["miou"] = miou;
    j["category_miou"] = category_miou ? nlohmann::json(*category_miou) : nlohmann::json(nullptr);
    j["labeled_fraction"] = labeled_fraction;
    j["evaluated_points"] = evaluated_points;
    j["total_points"] = total_points;
    return j;
}

}  // namespace leap
