#pragma once

#include "haptix/prompt.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace haptix {

// Lowercase, drop ASCII punctuation, split on whitespace.
std::vector<std::string> metric_tokens(const std::string& text);

// Sentence-level multi-reference BLEU with uniform weights over orders 1..max_n.
double bleu(const std::string& candidate, std::span<const std::string> references, int max_n);
// LCS F1, best reference.
double rouge_l(const std::string& candidate, std::span<const std::string> references);
// Exact then suffix-stem unigram alignment, best reference.
double meteor(const std::string& candidate, std::span<const std::string> references);

enum class Metric { bleu1, bleu4, rouge_l, meteor };

constexpr Metric kAllMetrics[] = {Metric::bleu1, Metric::bleu4, Metric::rouge_l, Metric::meteor};

// "bleu1", "bleu4", "rougeL", "meteor"
std::string to_string(Metric m);
std::string display_name(Metric m);
Metric metric_from_string(const std::string& s);
std::vector<Metric> parse_metric_list(const std::string& csv);

double score(Metric m, const std::string& candidate, std::span<const std::string> references);

struct EvalSample {
    std::string signal_id;
    Category category = Category::sensory;
    std::string candidate;
    std::vector<std::string> references;
};

struct MetricSummary {
    double mean = 0.0;  // x100
    double std = 0.0;   // population, x100
    size_t count = 0;
};

struct MetricReport {
    std::vector<Metric> metrics;
    // per_sample[i][k]: metric k of sample i, in [0, 1].
    std::vector<std::vector<double>> per_sample;
    std::map<Metric, MetricSummary> overall;
    std::map<Category, std::map<Metric, MetricSummary>> by_category;

    std::string to_kv() const;
    // Rows of "mean ± std" cells, one per group.
    std::string table(const std::string& label, bool by_category) const;
};

MetricReport evaluate_corpus(std::span<const EvalSample> samples, std::span<const Metric> metrics);

std::vector<EvalSample> eval_samples_from_jsonl(const std::string& text);
std::string to_jsonl(std::span<const EvalSample> samples);
std::vector<EvalSample> read_eval_samples(const std::filesystem::path& path);

} // namespace haptix
