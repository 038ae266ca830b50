#include "leap/taxonomy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "leap/error.hpp"

namespace leap {

ClassDistribution ClassDistribution::uniform(std::size_t num_classes) {
    if (num_classes == 0) throw DimensionError("uniform distribution needs at least one class");
    return ClassDistribution(std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes)));
}

ClassDistribution ClassDistribution::one_hot(std::size_t num_classes, std::size_t index) {
    if (index >= num_classes) throw DimensionError("one-hot index out of range");
    std::vector<double> p(num_classes, 0.0);
    p[index] = 1.0;
    return ClassDistribution(std::move(p));
}

ClassDistribution ClassDistribution::from_normalized(std::vector<double> probs, double tolerance) {
    if (probs.empty()) throw DimensionError("empty distribution");
    double sum = 0.0;
    for (double p : probs) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0 + tolerance)
            throw ParameterError("distribution entry outside [0, 1]");
        sum += p;
    }
    if (sum <= 0.0) throw ZeroMassError("distribution has zero mass");
    if (std::abs(sum - 1.0) > tolerance) throw ParameterError("distribution does not sum to one");
    return ClassDistribution(std::move(probs));
}

std::size_t ClassDistribution::argmax() const {
    return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

double ClassDistribution::max() const { return probs_.empty() ? 0.0 : probs_[argmax()]; }

ClassDistribution normalize(std::span<const double> raw, std::size_t num_classes) {
    if (raw.size() != num_classes || num_classes == 0)
        throw DimensionError("expected " + std::to_string(num_classes) + " classes, got " +
                             std::to_string(raw.size()));
    double sum = 0.0;
    for (double v : raw) {
        if (!std::isfinite(v) || v < 0.0) throw ParameterError("normalize: negative or non-finite entry");
        sum += v;
    }
    if (!(sum > 0.0)) throw ZeroMassError("normalize: all-zero vector");
    std::vector<double> out(raw.begin(), raw.end());
    for (double& v : out) v /= sum;
    return ClassDistribution(std::move(out));
}

namespace detail {

void normalize_inplace(std::span<double> probs) {
    double sum = 0.0;
    for (double v : probs) sum += v;
    if (!(sum > 0.0)) throw ZeroMassError("zero probability mass");
    for (double& v : probs) v /= sum;
}

void clamp_floor_inplace(std::span<double> probs, double eps) {
    for (double& v : probs) v = std::max(v, eps);
    normalize_inplace(probs);
}

}  // namespace detail

ClassDistribution clamp_floor(const ClassDistribution& d, double eps) {
    const double c = static_cast<double>(d.size());
    if (!(eps > 0.0) || !(eps < 1.0 / c))
        throw ParameterError("eps: floor must lie in (0, 1/c), got " + std::to_string(eps));
    std::vector<double> p(d.probs().begin(), d.probs().end());
    for (double& v : p) v = std::max(v, eps);
    return normalize(p);
}

std::size_t ClassTaxonomy::num_categories() const {
    std::size_t n = category_names.size();
    for (const auto& [cls, cat] : categories) n = std::max(n, cat + 1);
    return n;
}

void ClassTaxonomy::validate() const {
    if (classes.empty()) throw TaxonomyError("taxonomy must define at least one class");
    std::set<std::string> seen;
    for (const auto& name : classes) {
        if (name.empty()) throw TaxonomyError("empty class name");
        if (!seen.insert(name).second) throw TaxonomyError("duplicate class name '" + name + "'");
    }
    const std::size_t c = classes.size();
    for (const auto& [cls, cat] : categories)
        if (cls >= c) throw TaxonomyError("category map references class " + std::to_string(cls));
    for (const auto& [from, to] : merge_map)
        if (from >= c || to >= c) throw TaxonomyError("merge map references class out of range");
    if (ignore_label < c) throw TaxonomyError("ignore_label collides with a class index");
}

PromptMap::PromptMap(std::vector<PromptEntry> prompts, std::size_t num_classes)
    : prompts_(std::move(prompts)), by_class_(num_classes), num_classes_(num_classes) {
    for (std::size_t i = 0; i < prompts_.size(); ++i) {
        const auto c = prompts_[i].class_index;
        if (c >= num_classes)
            throw TaxonomyError("prompt '" + prompts_[i].prompt + "' maps to class " + std::to_string(c) +
                                " >= " + std::to_string(num_classes));
        by_class_[c].push_back(i);
    }
    for (std::size_t c = 0; c < num_classes; ++c)
        if (by_class_[c].empty()) throw TaxonomyError("class " + std::to_string(c) + " has no prompt");
}

TaxonomyConfig taxonomy_from_json(const nlohmann::json& j) {
    TaxonomyConfig out;
    auto& tax = out.taxonomy;
    try {
        tax.classes = j.at("classes").get<std::vector<std::string>>();
        if (j.contains("ignore_label")) tax.ignore_label = j.at("ignore_label").get<Label>();

        // {"vehicle": [0, 1], "nature": [2]}; categories are indexed in key order.
        if (j.contains("categories")) {
            std::size_t cat = 0;
            for (const auto& [name, members] : j.at("categories").items()) {
                tax.category_names.push_back(name);
                for (std::size_t cls : members.get<std::vector<std::size_t>>()) {
                    if (!tax.categories.emplace(cls, cat).second)
                        throw TaxonomyError("class " + std::to_string(cls) + " assigned to two categories");
                }
                ++cat;
            }
        }
        if (j.contains("merge_map")) {
            for (const auto& [from, to] : j.at("merge_map").items())
                tax.merge_map.emplace(std::stoul(from), to.get<std::size_t>());
        }
        tax.validate();

        std::vector<PromptEntry> prompts;
        if (j.contains("prompts")) {
            for (const auto& p : j.at("prompts")) {
                if (!p.is_array() || p.size() != 2) throw TaxonomyError("prompt entries must be [text, class]");
                prompts.push_back({p.at(0).get<std::string>(), p.at(1).get<std::size_t>()});
            }
        } else {
            for (std::size_t c = 0; c < tax.classes.size(); ++c) prompts.push_back({tax.classes[c], c});
        }
        out.prompts = PromptMap(std::move(prompts), tax.classes.size());
    } catch (const nlohmann::json::exception& e) {
        throw TaxonomyError(std::string("taxonomy json: ") + e.what());
    } catch (const std::invalid_argument&) {
        throw TaxonomyError("taxonomy json: merge_map keys must be class indices");
    }
    if (!tax.categories.empty() && tax.categories.size() != tax.classes.size())
        throw TaxonomyError("category map must cover every class");
    return out;
}

nlohmann::json taxonomy_to_json(const TaxonomyConfig& config) {
    const auto& tax = config.taxonomy;
    nlohmann::json j;
    j["classes"] = tax.classes;
    j["ignore_label"] = tax.ignore_label;
    nlohmann::json prompts = nlohmann::json::array();
    for (const auto& p : config.prompts.prompts()) prompts.push_back(nlohmann::json::array({p.prompt, p.class_index}));
    j["prompts"] = prompts;
    if (!tax.categories.empty()) {
        nlohmann::json cats = nlohmann::json::object();
        for (std::size_t k = 0; k < tax.category_names.size(); ++k) cats[tax.category_names[k]] = nlohmann::json::array();
        for (const auto& [cls, cat] : tax.categories) cats[tax.category_names.at(cat)].push_back(cls);
        j["categories"] = cats;
    }
    if (!tax.merge_map.empty()) {
        nlohmann::json merge = nlohmann::json::object();
        for (const auto& [from, to] : tax.merge_map) merge[std::to_string(from)] = to;
        j["merge_map"] = merge;
    }
    return j;
}

TaxonomyConfig load_taxonomy(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw TaxonomyError("cannot open taxonomy file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw TaxonomyError("taxonomy json parse error: " + std::string(e.what()));
    }
    return taxonomy_from_json(j);
}

}  // namespace leap
