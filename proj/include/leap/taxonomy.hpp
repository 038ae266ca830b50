#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace leap {

/// Class index as stored in label files (lower 16 bits of a SemanticKITTI label).
using Label = std::uint32_t;

inline constexpr Label kDefaultIgnoreLabel = 0xFFFF;
inline constexpr double kDefaultProbabilityFloor = 1e-6;

/// A probability vector over the taxonomy's classes. Always normalized.
class ClassDistribution {
public:
    ClassDistribution() = default;

    static ClassDistribution uniform(std::size_t num_classes);
    static ClassDistribution one_hot(std::size_t num_classes, std::size_t index);
    /// Adopts an already-normalized vector; throws DimensionError/ZeroMassError if it
    /// is not a distribution within `tolerance`.
    static ClassDistribution from_normalized(std::vector<double> probs, double tolerance = 1e-6);

    std::size_t size() const { return probs_.size(); }
    bool empty() const { return probs_.empty(); }
    double operator[](std::size_t i) const { return probs_[i]; }
    std::span<const double> probs() const { return probs_; }

    /// Smallest index attaining the maximum.
    std::size_t argmax() const;
    double max() const;

    friend bool operator==(const ClassDistribution&, const ClassDistribution&) = default;

private:
    explicit ClassDistribution(std::vector<double> probs) : probs_(std::move(probs)) {}
    friend ClassDistribution normalize(std::span<const double>, std::size_t);

    std::vector<double> probs_;
};

/// Divides by the sum. Throws DimensionError when `raw.size() != num_classes`,
/// ZeroMassError when the sum is not positive, ParameterError on negative or
/// non-finite entries.
ClassDistribution normalize(std::span<const double> raw, std::size_t num_classes);
inline ClassDistribution normalize(std::span<const double> raw) { return normalize(raw, raw.size()); }
inline ClassDistribution normalize(std::initializer_list<double> raw) {
    return normalize(std::span<const double>(raw.begin(), raw.size()));
}

/// Raises every entry to at least `eps` and renormalizes. Requires 0 < eps < 1/c.
ClassDistribution clamp_floor(const ClassDistribution& d, double eps);

/// In-place kernels shared by the hot fusion loops. `probs` must already be a
/// distribution; results are renormalized.
namespace detail {
void clamp_floor_inplace(std::span<double> probs, double eps);
void normalize_inplace(std::span<double> probs);
}  // namespace detail

struct ClassTaxonomy {
    std::vector<std::string> classes;
    /// class index -> category index; empty when no category grouping is defined.
    std::map<std::size_t, std::size_t> categories;
    std::vector<std::string> category_names;
    /// class index -> merged class index, for cross-dataset comparison.
    std::map<std::size_t, std::size_t> merge_map;
    Label ignore_label = kDefaultIgnoreLabel;

    std::size_t num_classes() const { return classes.size(); }
    bool has_categories() const { return !categories.empty(); }
    std::size_t num_categories() const;

    /// Throws TaxonomyError on duplicate/empty names or out-of-range indices.
    void validate() const;
};

struct PromptEntry {
    std::string prompt;
    std::size_t class_index = 0;
};

class PromptMap {
public:
    PromptMap() = default;
    /// Validates that every class index is < num_classes and every class has a prompt.
    PromptMap(std::vector<PromptEntry> prompts, std::size_t num_classes);

    std::size_t size() const { return prompts_.size(); }
    std::size_t num_classes() const { return num_classes_; }
    const std::vector<PromptEntry>& prompts() const { return prompts_; }
    /// Prompt positions belonging to class `c`, in file order.
    const std::vector<std::size_t>& prompts_of(std::size_t c) const { return by_class_.at(c); }

private:
    std::vector<PromptEntry> prompts_;
    std::vector<std::vector<std::size_t>> by_class_;
    std::size_t num_classes_ = 0;
};

/// Taxonomy plus prompt list, as loaded from one JSON file.
struct TaxonomyConfig {
    ClassTaxonomy taxonomy;
    PromptMap prompts;
};

TaxonomyConfig taxonomy_from_json(const nlohmann::json& j);
nlohmann::json taxonomy_to_json(const TaxonomyConfig& config);
TaxonomyConfig load_taxonomy(const std::filesystem::path& path);

}  // namespace leap
