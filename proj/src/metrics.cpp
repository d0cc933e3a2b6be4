#include "haptix/metrics.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace haptix {

namespace {

using Tokens = std::vector<std::string>;
using NGramCounts = std::map<std::vector<std::string>, int>;

NGramCounts ngrams(const Tokens& t, int n) {
    NGramCounts out;
    for (size_t i = 0; i + static_cast<size_t>(n) <= t.size(); ++i) {
        ++out[Tokens(t.begin() + static_cast<long>(i), t.begin() + static_cast<long>(i) + n)];
    }
    return out;
}

std::vector<Tokens> tokenize_all(std::span<const std::string> refs) {
    std::vector<Tokens> out;
    for (const auto& r : refs) {
        out.push_back(metric_tokens(r));
    }
    return out;
}

size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<size_t> prev(b.size() + 1, 0);
    std::vector<size_t> cur(b.size() + 1, 0);
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

// The word itself plus every form with one of s/es/ed/ing removed (stems of
// at least three characters).
std::vector<std::string> stem_forms(const std::string& w) {
    std::vector<std::string> out{w};
    for (const std::string suffix : {"ing", "ed", "es", "s"}) {
        if (w.size() >= suffix.size() + 3 && w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0) {
            out.push_back(w.substr(0, w.size() - suffix.size()));
        }
    }
    return out;
}

bool stem_match(const std::string& a, const std::string& b) {
    for (const auto& x : stem_forms(a)) {
        for (const auto& y : stem_forms(b)) {
            if (x == y) {
                return true;
            }
        }
    }
    return false;
}

double meteor_single(const Tokens& cand, const Tokens& ref) {
    if (cand.empty() || ref.empty()) {
        return 0.0;
    }
    std::vector<int> align(cand.size(), -1);
    std::vector<bool> used(ref.size(), false);
    const auto run_stage = [&](auto&& eq) {
        for (size_t i = 0; i < cand.size(); ++i) {
            if (align[i] >= 0) {
                continue;
            }
            // Continue the current chunk when possible, else take the leftmost.
            int pick = -1;
            if (i > 0 && align[i - 1] >= 0) {
                const auto next = static_cast<size_t>(align[i - 1] + 1);
                if (next < ref.size() && !used[next] && eq(cand[i], ref[next])) {
                    pick = static_cast<int>(next);
                }
            }
            for (size_t j = 0; pick < 0 && j < ref.size(); ++j) {
                if (!used[j] && eq(cand[i], ref[j])) {
                    pick = static_cast<int>(j);
                }
            }
            if (pick >= 0) {
                align[i] = pick;
                used[static_cast<size_t>(pick)] = true;
            }
        }
    };
    run_stage([](const std::string& a, const std::string& b) { return a == b; });
    run_stage(stem_match);

    int matches = 0;
    int chunks = 0;
    for (size_t i = 0; i < cand.size(); ++i) {
        if (align[i] < 0) {
            continue;
        }
        ++matches;
        if (i == 0 || align[i - 1] < 0 || align[i - 1] + 1 != align[i]) {
            ++chunks;
        }
    }
    if (matches == 0) {
        return 0.0;
    }
    const double p = static_cast<double>(matches) / static_cast<double>(cand.size());
    const double r = static_cast<double>(matches) / static_cast<double>(ref.size());
    const double fmean = 10.0 * p * r / (r + 9.0 * p);
    const double frag = static_cast<double>(chunks) / static_cast<double>(matches);
    const double penalty = 0.5 * frag * frag * frag;
    return fmean * (1.0 - penalty);
}

MetricSummary summarize(const std::vector<double>& xs) {
    MetricSummary s;
    s.count = xs.size();
    if (xs.empty()) {
        return s;
    }
    double sum = 0.0;
    for (double x : xs) {
        sum += x;
    }
    const double mean = sum / static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) {
        var += (x - mean) * (x - mean);
    }
    var /= static_cast<double>(xs.size());
    s.mean = 100.0 * mean;
    s.std = 100.0 * std::sqrt(var);
    return s;
}

std::string cell(const MetricSummary& s) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << s.mean << " ± " << s.std;
    return os.str();
}

} // namespace

std::vector<std::string> metric_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char ch : text) {
        if (std::isspace(ch)) {
            if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
        } else if (ch < 128 && std::ispunct(ch)) {
            continue;
        } else {
            cur.push_back(static_cast<char>(ch < 128 ? std::tolower(ch) : ch));
        }
    }
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

double bleu(const std::string& candidate, std::span<const std::string> references, int max_n) {
    if (max_n < 1) {
        throw std::invalid_argument("bleu: max_n must be >= 1");
    }
    const Tokens cand = metric_tokens(candidate);
    const auto refs = tokenize_all(references);
    if (cand.empty() || refs.empty()) {
        return 0.0;
    }
    const double c = static_cast<double>(cand.size());
    // Orders longer than the candidate have no n-grams; the geometric mean runs
    // over the orders that exist.
    const int orders = std::min(max_n, static_cast<int>(cand.size()));
    double log_sum = 0.0;
    for (int n = 1; n <= orders; ++n) {
        const auto cand_counts = ngrams(cand, n);
        NGramCounts max_ref;
        for (const auto& r : refs) {
            for (const auto& [g, k] : ngrams(r, n)) {
                max_ref[g] = std::max(max_ref[g], k);
            }
        }
        double matched = 0.0;
        for (const auto& [g, k] : cand_counts) {
            const auto it = max_ref.find(g);
            if (it != max_ref.end()) {
                matched += std::min(k, it->second);
            }
        }
        const double total = c - n + 1.0;
        if (matched == 0.0) {
            if (n == 1) {
                return 0.0;
            }
            matched = 1.0 / (2.0 * c);
        }
        log_sum += std::log(matched / total);
    }

    // Closest reference length; ties go to the shorter reference.
    size_t r_len = refs[0].size();
    for (const auto& r : refs) {
        const auto d = std::abs(static_cast<long>(r.size()) - static_cast<long>(cand.size()));
        const auto best = std::abs(static_cast<long>(r_len) - static_cast<long>(cand.size()));
        if (d < best || (d == best && r.size() < r_len)) {
            r_len = r.size();
        }
    }
    const double bp = cand.size() > r_len ? 1.0 : std::exp(1.0 - static_cast<double>(r_len) / c);
    return bp * std::exp(log_sum / orders);
}

double rouge_l(const std::string& candidate, std::span<const std::string> references) {
    const Tokens cand = metric_tokens(candidate);
    if (cand.empty()) {
        return 0.0;
    }
    double best = 0.0;
    for (const auto& ref : tokenize_all(references)) {
        if (ref.empty()) {
            continue;
        }
        const auto l = static_cast<double>(lcs_length(cand, ref));
        if (l == 0.0) {
            continue;
        }
        const double p = l / static_cast<double>(cand.size());
        const double r = l / static_cast<double>(ref.size());
        best = std::max(best, 2.0 * p * r / (p + r));
    }
    return best;
}

double meteor(const std::string& candidate, std::span<const std::string> references) {
    const Tokens cand = metric_tokens(candidate);
    double best = 0.0;
    for (const auto& ref : tokenize_all(references)) {
        best = std::max(best, meteor_single(cand, ref));
    }
    return best;
}

std::string to_string(Metric m) {
    switch (m) {
    case Metric::bleu1: return "bleu1";
    case Metric::bleu4: return "bleu4";
    case Metric::rouge_l: return "rougeL";
    case Metric::meteor: return "meteor";
    }
    throw std::invalid_argument("bad metric");
}

std::string display_name(Metric m) {
    switch (m) {
    case Metric::bleu1: return "BLEU-1";
    case Metric::bleu4: return "BLEU-4";
    case Metric::rouge_l: return "ROUGE-L";
    case Metric::meteor: return "METEOR";
    }
    throw std::invalid_argument("bad metric");
}

Metric metric_from_string(const std::string& s) {
    for (auto m : kAllMetrics) {
        if (to_string(m) == s) {
            return m;
        }
    }
    throw std::invalid_argument("unknown metric: " + s);
}

std::vector<Metric> parse_metric_list(const std::string& csv) {
    std::vector<Metric> out;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) {
            out.push_back(metric_from_string(item));
        }
    }
    if (out.empty()) {
        throw std::invalid_argument("no metrics given");
    }
    return out;
}

double score(Metric m, const std::string& candidate, std::span<const std::string> references) {
    switch (m) {
    case Metric::bleu1: return bleu(candidate, references, 1);
    case Metric::bleu4: return bleu(candidate, references, 4);
    case Metric::rouge_l: return rouge_l(candidate, references);
    case Metric::meteor: return meteor(candidate, references);
    }
    throw std::invalid_argument("bad metric");
}

MetricReport evaluate_corpus(std::span<const EvalSample> samples, std::span<const Metric> metrics) {
    if (samples.empty()) {
        throw std::invalid_argument("evaluate_corpus: no samples");
    }
    MetricReport rep;
    rep.metrics.assign(metrics.begin(), metrics.end());
    for (const auto& s : samples) {
        const bool has_ref = std::any_of(s.references.begin(), s.references.end(),
                                         [](const std::string& r) { return !metric_tokens(r).empty(); });
        if (!has_ref) {
            throw std::invalid_argument("sample " + s.signal_id + " has no non-empty reference");
        }
        std::vector<double> row;
        for (auto m : metrics) {
            row.push_back(score(m, s.candidate, s.references));
        }
        rep.per_sample.push_back(std::move(row));
    }
    for (size_t k = 0; k < metrics.size(); ++k) {
        std::vector<double> all;
        std::map<Category, std::vector<double>> per_cat;
        for (size_t i = 0; i < samples.size(); ++i) {
            all.push_back(rep.per_sample[i][k]);
            per_cat[samples[i].category].push_back(rep.per_sample[i][k]);
        }
        rep.overall[metrics[k]] = summarize(all);
        for (const auto& [c, xs] : per_cat) {
            rep.by_category[c][metrics[k]] = summarize(xs);
        }
    }
    return rep;
}

std::string MetricReport::to_kv() const {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "samples = " << per_sample.size() << "\n";
    for (auto m : metrics) {
        const auto& s = overall.at(m);
        os << "overall." << to_string(m) << ".mean = " << s.mean << "\n";
        os << "overall." << to_string(m) << ".std = " << s.std << "\n";
    }
    for (const auto& [c, ms] : by_category) {
        for (auto m : metrics) {
            const auto& s = ms.at(m);
            os << to_string(c) << "." << to_string(m) << ".mean = " << s.mean << "\n";
            os << to_string(c) << "." << to_string(m) << ".std = " << s.std << "\n";
            os << to_string(c) << "." << to_string(m) << ".count = " << s.count << "\n";
        }
    }
    return os.str();
}

std::string MetricReport::table(const std::string& label, bool with_categories) const {
    std::vector<std::pair<std::string, const std::map<Metric, MetricSummary>*>> rows{{label, &overall}};
    if (with_categories) {
        for (const auto& [c, ms] : by_category) {
            rows.emplace_back(label + " / " + to_string(c), &ms);
        }
    }
    size_t w0 = 5;
    for (const auto& r : rows) {
        w0 = std::max(w0, r.first.size());
    }
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(w0)) << "Model";
    for (auto m : metrics) {
        os << " | " << std::setw(16) << display_name(m);
    }
    os << "\n" << std::string(w0, '-');
    for (size_t k = 0; k < metrics.size(); ++k) {
        os << "-+-" << std::string(16, '-');
    }
    os << "\n";
    for (const auto& [name, ms] : rows) {
        os << std::setw(static_cast<int>(w0)) << name;
        for (auto m : metrics) {
            // "±" is two bytes; pad by visible width.
            const auto c = cell(ms->at(m));
            os << " | " << c << std::string(c.size() < 17 ? 17 - c.size() : 0, ' ');
        }
        os << "\n";
    }
    return os.str();
}

std::vector<EvalSample> eval_samples_from_jsonl(const std::string& text) {
    std::vector<EvalSample> out;
    std::istringstream in(text);
    std::string line;
    size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            EvalSample s;
            s.signal_id = j.at("signal_id").get<std::string>();
            s.category = category_from_string(j.at("category").get<std::string>());
            s.candidate = j.at("candidate").get<std::string>();
            s.references = j.at("references").get<std::vector<std::string>>();
            out.push_back(std::move(s));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::string to_jsonl(std::span<const EvalSample> samples) {
    std::string out;
    for (const auto& s : samples) {
        nlohmann::json j{{"signal_id", s.signal_id},
                         {"category", to_string(s.category)},
                         {"candidate", s.candidate},
                         {"references", s.references}};
        out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
    }
    return out;
}

std::vector<EvalSample> read_eval_samples(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return eval_samples_from_jsonl(ss.str());
}

} // namespace haptix
