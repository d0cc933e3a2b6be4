#include "haptix/corpus.hpp"
#include "haptix/dpo.hpp"
#include "haptix/freq_tokenizer.hpp"
#include "haptix/metrics.hpp"
#include "haptix/pipeline.hpp"
#include "haptix/prompt.hpp"
#include "haptix/rvq.hpp"
#include "haptix/service.hpp"
#include "haptix/train.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <csignal>
#include <filesystem>
#include <map>
#include <iostream>
#include <sstream>

using namespace haptix;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TokenizerOptions {
    std::string kind = "freq";
    std::string config;
    std::string codec;
};

std::map<std::string, OptimizerKind> optimizer_names() {
    return {{"adam", OptimizerKind::adam}, {"sgd", OptimizerKind::sgd_momentum}};
}

void add_tokenizer_options(CLI::App* cmd, TokenizerOptions& t) {
    cmd->add_option("--tokenizer", t.kind, "freq or rvq")->check(CLI::IsMember({"freq", "rvq"}));
    cmd->add_option("--config", t.config, "frequency tokenizer key-value config");
    cmd->add_option("--codec", t.codec, "RVQ codec file");
}

TokenizerSet load_tokenizers(const TokenizerOptions& t) {
    TokenizerSet out;
    if (!t.config.empty()) {
        out.freq = FreqTokenizerConfig::from_kv(KeyValueConfig::load(t.config));
    }
    if (!t.codec.empty()) {
        out.rvq = load_codec(t.codec);
    }
    return out;
}

std::vector<SignalEntry> load_signals(const fs::path& dir) {
    if (fs::exists(dir / "manifest.jsonl")) {
        return read_signal_set(dir);
    }
    std::vector<SignalEntry> out;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".wav") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        out.push_back({f.stem().string(), "file", read_wav(f)});
    }
    if (out.empty()) {
        throw std::runtime_error("no signals found in " + dir.string());
    }
    return out;
}

fs::path signals_dir_for(const std::string& data, const std::string& signals) {
    return signals.empty() ? fs::path(data).parent_path() : fs::path(signals);
}

void store_tokenizer_meta(KeyValueConfig& meta, TokenizerKind kind, const TokenizerOptions& t,
                          const TokenizerSet& ts, int stride) {
    meta.set("tokenizer", to_string(kind));
    meta.set("haptic_stride", std::to_string(stride));
    if (!t.codec.empty()) {
        meta.set("codec", fs::absolute(t.codec).string());
    }
    const auto freq_kv = ts.freq.to_kv();
    for (const auto& [k, v] : freq_kv.values()) {
        meta.set("freq." + k, v);
    }
}

TokenizerSet tokenizers_from_meta(const KeyValueConfig& meta, const std::string& codec_override) {
    TokenizerSet out;
    KeyValueConfig freq;
    for (const auto& [k, v] : meta.values()) {
        if (k.rfind("freq.", 0) == 0) {
            freq.set(k.substr(5), v);
        }
    }
    out.freq = FreqTokenizerConfig::from_kv(freq);
    const std::string codec = codec_override.empty() && meta.has("codec") ? meta.get("codec") : codec_override;
    if (!codec.empty()) {
        out.rvq = load_codec(codec);
    }
    return out;
}

HapticTokenSequence read_token_file(const fs::path& path, TokenizerKind kind, const Vocabulary& vocab) {
    std::istringstream in(read_text(path));
    HapticTokenSequence seq;
    seq.source = kind;
    const int offset = vocab.haptic_offset(kind);
    std::string tok;
    while (in >> tok) {
        if (std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); })) {
            seq.ids.push_back(std::stoi(tok));
        } else {
            seq.ids.push_back(vocab.id_of(tok) - offset);
        }
    }
    return seq;
}

SynthSpec spec_from_json(const json& j) {
    SynthSpec s;
    s.kind = synth_kind_from_string(j.value("kind", std::string("sine")));
    s.frequency = j.value("frequency", s.frequency);
    s.end_frequency = j.value("end_frequency", s.frequency);
    s.amplitude = j.value("amplitude", s.amplitude);
    s.duration = j.value("duration", s.duration);
    s.period = j.value("period", s.period);
    s.duty = j.value("duty", s.duty);
    if (j.contains("envelope")) {
        for (const auto& p : j.at("envelope")) {
            s.envelope.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        }
    }
    return s;
}

void print_report(const MetricReport& rep, bool by_category, const std::string& label) {
    std::cout << rep.table(label, by_category);
}

int run_serve(RatingServer& server) {
    static RatingServer* active = nullptr;
    active = &server;
    std::signal(SIGINT, [](int) {
        if (active) {
            active->stop();
        }
    });
    server.listen();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"haptic signal captioning toolkit"};
    app.require_subcommand(1);
    uint64_t seed = 0;
    app.add_option("--seed", seed, "random seed")->capture_default_str();

    auto with_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "random seed");
        return cmd;
    };

    // synth
    auto* synth = with_seed(app.add_subcommand("synth", "synthesize signals from a spec file or a caption corpus"));
    std::string synth_spec, synth_out;
    int synth_captions = 0;
    bool synth_canonical = false;
    synth->add_option("--spec", synth_spec, "JSON-lines synthesis specs");
    synth->add_option("--caption-corpus", synth_captions, "generate N captioned signals instead");
    synth->add_flag("--canonical", synth_canonical, "one canonical caption per category");
    synth->add_option("--out", synth_out, "output directory")->required();

    // tokenize
    auto* tokenize_cmd = with_seed(app.add_subcommand("tokenize", "print the haptic tokens of a WAV file"));
    TokenizerOptions tok_opts;
    std::string tok_in;
    bool tok_ids = false;
    add_tokenizer_options(tokenize_cmd, tok_opts);
    tokenize_cmd->add_option("--in", tok_in, "input WAV")->required()->check(CLI::ExistingFile);
    tokenize_cmd->add_flag("--ids", tok_ids, "print integer ids instead of symbols");

    // rvq-fit
    auto* rvq_cmd = with_seed(app.add_subcommand("rvq-fit", "train an RVQ codec on a directory of signals"));
    std::string rvq_corpus, rvq_out;
    RvqConfig rvq_cfg;
    rvq_cmd->add_option("--corpus", rvq_corpus, "signal directory")->required()->check(CLI::ExistingDirectory);
    rvq_cmd->add_option("--stages", rvq_cfg.num_stages)->capture_default_str();
    rvq_cmd->add_option("--codebook", rvq_cfg.codebook_size)->capture_default_str();
    rvq_cmd->add_option("--frame", rvq_cfg.frame_len)->capture_default_str();
    rvq_cmd->add_option("--frames", rvq_cfg.num_frames)->capture_default_str();
    rvq_cmd->add_option("--iters", rvq_cfg.kmeans_iters)->capture_default_str();
    rvq_cmd->add_option("--max-training-frames", rvq_cfg.max_training_frames)->capture_default_str();
    rvq_cmd->add_option("--out", rvq_out)->required();

    // prompt
    auto* prompt_cmd = with_seed(app.add_subcommand("prompt", "assemble a prompt from a token file"));
    TokenizerOptions prompt_tok;
    std::string prompt_tokens, prompt_category = "sensory", prompt_caption;
    add_tokenizer_options(prompt_cmd, prompt_tok);
    prompt_cmd->add_option("--signal-tokens", prompt_tokens, "file of symbols or ids")->required();
    prompt_cmd->add_option("--category", prompt_category)->capture_default_str();
    prompt_cmd->add_option("--caption", prompt_caption);

    // train-sft
    auto* sft_cmd = with_seed(app.add_subcommand("train-sft", "supervised fine-tuning"));
    TokenizerOptions sft_tok;
    std::string sft_data, sft_signals, sft_out, sft_init, sft_split = "train";
    TrainConfig sft_cfg;
    BackboneConfig backbone;
    int sft_stride = 1;
    double sft_lora_scale = ModelConfig{}.lora_scale;
    add_tokenizer_options(sft_cmd, sft_tok);
    sft_cmd->add_option("--data", sft_data, "caption records JSONL")->required()->check(CLI::ExistingFile);
    sft_cmd->add_option("--signals", sft_signals, "signal directory (default: next to --data)");
    sft_cmd->add_option("--split", sft_split, "train, valid, test or all")->capture_default_str();
    sft_cmd->add_option("--epochs", sft_cfg.epochs)->capture_default_str();
    sft_cmd->add_option("--lr", sft_cfg.learning_rate)->capture_default_str();
    sft_cmd->add_option("--batch", sft_cfg.batch_size)->capture_default_str();
    sft_cmd->add_option("--optimizer", sft_cfg.optimizer, "adam or sgd")
        ->transform(CLI::CheckedTransformer(optimizer_names(), CLI::ignore_case));
    sft_cmd->add_option("--stride", sft_stride, "haptic token subsampling stride")->capture_default_str();
    sft_cmd->add_option("--lora-scale", sft_lora_scale)->capture_default_str();
    sft_cmd->add_option("--init", sft_init, "start from this checkpoint instead of a fresh backbone");
    sft_cmd->add_option("--backbone-epochs", backbone.epochs, "text-only base training epochs")->capture_default_str();
    sft_cmd->add_option("--backbone-lr", backbone.learning_rate)->capture_default_str();
    bool no_hints = false;
    sft_cmd->add_flag("--no-backbone-hints", no_hints, "skip feature-word prompts during base training");
    sft_cmd->add_option("--out", sft_out)->required();

    // generate
    auto* gen_cmd = with_seed(app.add_subcommand("generate", "caption a signal or a dataset"));
    std::string gen_ckpt, gen_in, gen_category = "sensory", gen_codec, gen_data, gen_signals, gen_out, gen_pool;
    std::string gen_split = "test";
    DecodeConfig decode;
    double temperature = 0.0;
    int gen_samples = 2;
    gen_cmd->add_option("--ckpt", gen_ckpt)->required()->check(CLI::ExistingFile);
    gen_cmd->add_option("--in", gen_in, "single WAV input");
    gen_cmd->add_option("--category", gen_category)->capture_default_str();
    gen_cmd->add_option("--codec", gen_codec, "override the codec recorded in the checkpoint");
    gen_cmd->add_option("--data", gen_data, "caption records JSONL; writes eval predictions");
    gen_cmd->add_option("--signals", gen_signals);
    gen_cmd->add_option("--split", gen_split, "train, valid, test or all")->capture_default_str();
    gen_cmd->add_option("--out", gen_out, "predictions JSONL");
    gen_cmd->add_option("--pool-out", gen_pool, "write a rating caption pool from sampled captions");
    gen_cmd->add_option("--samples", gen_samples, "captions per prompt for --pool-out")->capture_default_str();
    gen_cmd->add_option("--temperature", temperature, "sample at this temperature instead of greedy decoding");
    gen_cmd->add_option("--max-tokens", decode.max_new_tokens)->capture_default_str();

    // rate serve
    auto* rate_cmd = app.add_subcommand("rate", "rating collection");
    rate_cmd->require_subcommand(1);
    auto* serve_cmd = with_seed(rate_cmd->add_subcommand("serve", "run the rating service"));
    std::string serve_pool, serve_signals, serve_log = "ratings.log", serve_static;
    ServerConfig server_cfg;
    int per_session = 32;
    bool no_sync = false;
    serve_cmd->add_option("--pool", serve_pool, "caption pool JSONL (default: synthetic pool)");
    serve_cmd->add_option("--signals", serve_signals, "signal directory")->required()->check(CLI::ExistingDirectory);
    serve_cmd->add_option("--log", serve_log)->capture_default_str();
    serve_cmd->add_option("--host", server_cfg.host)->capture_default_str();
    serve_cmd->add_option("--port", server_cfg.port)->capture_default_str();
    serve_cmd->add_option("--static", serve_static, "directory of UI assets");
    serve_cmd->add_option("--signals-per-session", per_session)->capture_default_str();
    serve_cmd->add_flag("--no-sync", no_sync, "skip fdatasync after each rating");

    // pairs
    auto* pairs_cmd = with_seed(app.add_subcommand("pairs", "build preference pairs from ratings"));
    std::string pairs_ratings, pairs_out;
    PairOptions pair_opts;
    pairs_cmd->add_option("--ratings", pairs_ratings)->required()->check(CLI::ExistingFile);
    pairs_cmd->add_option("--out", pairs_out)->required();
    pairs_cmd->add_option("--threshold", pair_opts.threshold)->capture_default_str();
    pairs_cmd->add_flag("--cross-variant", pair_opts.cross_variant);

    // train-dpo
    auto* dpo_cmd = with_seed(app.add_subcommand("train-dpo", "preference fine-tuning"));
    std::string dpo_ckpt, dpo_pairs, dpo_signals, dpo_out, dpo_codec;
    DpoConfig dpo_cfg;
    dpo_cmd->add_option("--ckpt", dpo_ckpt)->required()->check(CLI::ExistingFile);
    dpo_cmd->add_option("--pairs", dpo_pairs)->required()->check(CLI::ExistingFile);
    dpo_cmd->add_option("--signals", dpo_signals, "signal directory")->required()->check(CLI::ExistingDirectory);
    dpo_cmd->add_option("--codec", dpo_codec);
    dpo_cmd->add_option("--beta", dpo_cfg.beta)->capture_default_str();
    dpo_cmd->add_option("--epochs", dpo_cfg.epochs)->capture_default_str();
    dpo_cmd->add_option("--lr", dpo_cfg.learning_rate)->capture_default_str();
    dpo_cmd->add_option("--batch", dpo_cfg.batch_size)->capture_default_str();
    dpo_cmd->add_option("--optimizer", dpo_cfg.optimizer, "adam or sgd")
        ->transform(CLI::CheckedTransformer(optimizer_names(), CLI::ignore_case));
    dpo_cmd->add_option("--out", dpo_out)->required();

    // eval
    auto* eval_cmd = with_seed(app.add_subcommand("eval", "score predictions"));
    std::string eval_pred, eval_metrics = "bleu1,bleu4,rougeL,meteor", eval_report, eval_label = "model";
    bool by_category = false;
    eval_cmd->add_option("--pred", eval_pred)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--metrics", eval_metrics)->capture_default_str();
    eval_cmd->add_flag("--by-category", by_category);
    eval_cmd->add_option("--report", eval_report, "write the key-value report here");
    eval_cmd->add_option("--label", eval_label)->capture_default_str();

    // vibrate-gen
    auto* vib_cmd = with_seed(app.add_subcommand("vibrate-gen", "generate the 704-signal rating corpus"));
    std::string vib_out;
    vib_cmd->add_option("--out", vib_out)->required();

    // split
    auto* split_cmd = with_seed(app.add_subcommand("split", "assign train/valid/test splits by signal"));
    std::string split_data, split_out;
    std::vector<double> ratios{0.8, 0.1, 0.1};
    split_cmd->add_option("--data", split_data)->required()->check(CLI::ExistingFile);
    split_cmd->add_option("--ratios", ratios)->delimiter(',')->expected(3)->capture_default_str();
    split_cmd->add_option("--out", split_out)->required();

    CLI11_PARSE(app, argc, argv);

    auto split_filter = [](const std::string& s) -> std::optional<Split> {
        if (s == "all") return std::nullopt;
        return split_from_string(s);
    };

    try {
        if (*synth) {
            if (synth_spec.empty() == (synth_captions == 0)) {
                throw std::invalid_argument("give exactly one of --spec or --caption-corpus");
            }
            if (synth_captions > 0) {
                CaptionCorpusOptions o;
                o.num_signals = synth_captions;
                o.canonical = synth_canonical;
                const auto c = generate_caption_corpus(o, seed);
                write_signal_set(c.signals, synth_out);
                write_text(fs::path(synth_out) / "captions.jsonl", to_jsonl(c.records));
                std::cout << c.signals.size() << " signals, " << c.records.size() << " captions -> " << synth_out
                          << "\n";
            } else {
                std::vector<SignalEntry> signals;
                std::istringstream in(read_text(synth_spec));
                std::string line;
                while (std::getline(in, line)) {
                    if (line.find_first_not_of(" \t\r") == std::string::npos) {
                        continue;
                    }
                    const auto j = json::parse(line);
                    auto spec = spec_from_json(j);
                    spec.noise_seed = j.value("noise_seed", seed + signals.size());
                    char id[32];
                    std::snprintf(id, sizeof(id), "sig_%04zu", signals.size());
                    signals.push_back({j.value("id", std::string(id)), "synth", synthesize(spec)});
                }
                write_signal_set(signals, synth_out);
                std::cout << signals.size() << " signals -> " << synth_out << "\n";
            }
        } else if (*tokenize_cmd) {
            const auto ts = load_tokenizers(tok_opts);
            const auto kind = tokenizer_kind_from_string(tok_opts.kind);
            const auto seq = tokenize(read_wav(tok_in), kind, ts);
            const auto vocab = make_vocabulary(kind, ts);
            const int offset = vocab.haptic_offset(kind);
            for (size_t i = 0; i < seq.ids.size(); ++i) {
                std::cout << (i ? " " : "") << (tok_ids ? std::to_string(seq.ids[i]) : vocab.symbol(seq.ids[i] + offset));
            }
            std::cout << "\n";
        } else if (*rvq_cmd) {
            std::vector<Waveform> corpus;
            for (auto& s : load_signals(rvq_corpus)) {
                corpus.push_back(std::move(s.wave));
            }
            const auto codec = rvq_fit(corpus, rvq_cfg, seed);
            save_codec(codec, rvq_out);
            std::cout << "codec: " << rvq_cfg.num_stages << " stage(s) x " << rvq_cfg.codebook_size << " centroids"
                      << (codec.degenerate ? " (degenerate)" : "") << " -> " << rvq_out << "\n";
        } else if (*prompt_cmd) {
            const auto ts = load_tokenizers(prompt_tok);
            const auto kind = tokenizer_kind_from_string(prompt_tok.kind);
            const auto vocab = make_vocabulary(kind, ts);
            const auto seq = read_token_file(prompt_tokens, kind, vocab);
            std::optional<std::string> caption;
            if (!prompt_caption.empty()) {
                caption = prompt_caption;
            }
            const auto p = assemble(seq, category_from_string(prompt_category), caption, vocab);
            for (size_t i = 0; i < p.ids.size(); ++i) {
                std::cout << (i ? " " : "") << p.ids[i];
            }
            std::cout << "\n" << vocab.detokenize(p.ids) << "\n";
        } else if (*sft_cmd) {
            const auto records = read_caption_records(sft_data);
            const auto signals = load_signals(signals_dir_for(sft_data, sft_signals));
            Checkpoint ckpt;
            TokenizerSet ts;
            TokenizerKind kind;
            if (!sft_init.empty()) {
                ckpt = load_checkpoint(sft_init);
                ts = tokenizers_from_meta(ckpt.meta, sft_tok.codec);
                kind = tokenizer_kind_from_string(ckpt.meta.get("tokenizer"));
            } else {
                ts = load_tokenizers(sft_tok);
                kind = tokenizer_kind_from_string(sft_tok.kind);
                ckpt.vocab = make_vocabulary(kind, ts);
                auto mc = model_config_for(ckpt.vocab, kind);
                mc.lora_scale = sft_lora_scale;
                ckpt.state = init_model(mc, seed);
                backbone.seed = seed;
                backbone.feature_hints = !no_hints;
                if (backbone.epochs > 0) {
                    const auto r = pretrain_backbone(ckpt.state, ckpt.vocab, backbone, records);
                    std::cout << "backbone loss " << r.epoch_loss.back() << "\n";
                }
                store_tokenizer_meta(ckpt.meta, kind, sft_tok, ts, sft_stride);
            }
            const int stride = static_cast<int>(ckpt.meta.get_int("haptic_stride", sft_stride));
            const auto data =
                build_sft_data(records, wave_map(signals), kind, ts, ckpt.vocab, split_filter(sft_split), stride);
            if (data.samples.empty()) {
                throw std::invalid_argument("no training records in split " + sft_split);
            }
            sft_cfg.seed = seed;
            sft_cfg.on_epoch = [](int e, double loss) { std::cout << "epoch " << e + 1 << " loss " << loss << "\n"; };
            train_sft(ckpt.state, data.samples, sft_cfg);
            ckpt.meta.set("stage", "sft");
            save_checkpoint(ckpt, sft_out);
        } else if (*gen_cmd) {
            const auto ckpt = load_checkpoint(gen_ckpt);
            const auto ts = tokenizers_from_meta(ckpt.meta, gen_codec);
            const auto kind = tokenizer_kind_from_string(ckpt.meta.get("tokenizer"));
            const int stride = static_cast<int>(ckpt.meta.get_int("haptic_stride", 1));
            decode.seed = seed;
            if (temperature > 0.0) {
                decode.greedy = false;
                decode.temperature = temperature;
            }
            if (!gen_in.empty()) {
                const auto p = assemble(tokenize(read_wav(gen_in), kind, ts), category_from_string(gen_category),
                                        std::nullopt, ckpt.vocab, stride);
                std::cout << generate(ckpt.state, p, ckpt.vocab, decode) << "\n";
            } else if (!gen_data.empty()) {
                const auto records = read_caption_records(gen_data);
                const auto signals = load_signals(signals_dir_for(gen_data, gen_signals));
                const auto data = build_sft_data(records, wave_map(signals), kind, ts, ckpt.vocab,
                                                 split_filter(gen_split), stride);
                if (!gen_pool.empty()) {
                    std::vector<PoolCaption> pool;
                    for (const auto& g : data.groups) {
                        const auto p = assemble(g.haptic, g.category, std::nullopt, ckpt.vocab, stride);
                        std::set<std::string> seen;
                        for (int k = 0; k < gen_samples; ++k) {
                            DecodeConfig d = decode;
                            d.seed = seed + fnv1a64(g.signal_id) + static_cast<uint64_t>(k);
                            auto text = generate(ckpt.state, p, ckpt.vocab, d);
                            if (text.empty() || !seen.insert(text).second) {
                                continue;
                            }
                            pool.push_back({g.signal_id + ":" + to_string(g.category) + ":" + to_string(kind) + ":" +
                                                std::to_string(k),
                                            g.signal_id, g.category, std::move(text), kind});
                        }
                    }
                    write_text(gen_pool, to_jsonl(pool));
                    std::cout << pool.size() << " pool captions -> " << gen_pool << "\n";
                }
                if (!gen_out.empty() || gen_pool.empty()) {
                    const auto preds = caption_groups(ckpt.state, data.groups, ckpt.vocab, decode, stride);
                    if (gen_out.empty()) {
                        std::cout << to_jsonl(preds);
                    } else {
                        write_text(gen_out, to_jsonl(preds));
                        std::cout << preds.size() << " predictions -> " << gen_out << "\n";
                    }
                }
            } else {
                throw std::invalid_argument("give --in or --data");
            }
        } else if (*rate_cmd) {
            const auto signals = load_signals(serve_signals);
            const auto pool = serve_pool.empty() ? synthetic_pool(signals, seed) : read_pool(serve_pool);
            RatingLog log(serve_log, !no_sync);
            RatingService service(pool, {per_session, seed}, log);
            server_cfg.signals_dir = serve_signals;
            server_cfg.static_dir = serve_static;
            RatingServer server(service, server_cfg);
            const int port = server.bind();
            std::cout << "serving " << pool.size() << " captions in " << service.num_blocks() << " blocks on http://"
                      << server_cfg.host << ":" << port << std::endl;
            return run_serve(server);
        } else if (*pairs_cmd) {
            const auto ratings = read_ratings(pairs_ratings);
            const auto text = export_preferences(ratings, pair_opts);
            write_text(pairs_out, text);
            std::cout << std::count(text.begin(), text.end(), '\n') << " pairs from " << ratings.size()
                      << " ratings -> " << pairs_out << "\n";
        } else if (*dpo_cmd) {
            auto ckpt = load_checkpoint(dpo_ckpt);
            const auto ts = tokenizers_from_meta(ckpt.meta, dpo_codec);
            const auto kind = tokenizer_kind_from_string(ckpt.meta.get("tokenizer"));
            const int stride = static_cast<int>(ckpt.meta.get_int("haptic_stride", 1));
            const auto waves = wave_map(load_signals(dpo_signals));
            const auto pairs = read_pairs(dpo_pairs);
            std::map<std::string, HapticTokenSequence> tokens;
            std::vector<DpoExample> data;
            for (const auto& p : pairs) {
                auto it = tokens.find(p.signal_id);
                if (it == tokens.end()) {
                    const auto w = waves.find(p.signal_id);
                    if (w == waves.end()) {
                        throw std::invalid_argument("no waveform for signal " + p.signal_id);
                    }
                    it = tokens.emplace(p.signal_id, tokenize(w->second, kind, ts)).first;
                }
                data.push_back(make_dpo_example(p, it->second, ckpt.vocab, stride));
            }
            if (data.empty()) {
                throw std::invalid_argument("no preference pairs");
            }
            const ModelState reference = ckpt.state;
            dpo_cfg.seed = seed;
            dpo_cfg.on_epoch = [](int e, double loss, double margin) {
                std::cout << "epoch " << e + 1 << " loss " << loss << " margin " << margin << "\n";
            };
            train_dpo(ckpt.state, reference, data, dpo_cfg);
            ckpt.meta.set("stage", "dpo");
            save_checkpoint(ckpt, dpo_out);
        } else if (*eval_cmd) {
            const auto samples = read_eval_samples(eval_pred);
            const auto metrics = parse_metric_list(eval_metrics);
            const auto rep = evaluate_corpus(samples, metrics);
            print_report(rep, by_category, eval_label);
            if (!eval_report.empty()) {
                write_text(eval_report, rep.to_kv());
            } else {
                std::cout << rep.to_kv();
            }
        } else if (*vib_cmd) {
            const auto signals = generate_vibrate(seed);
            write_signal_set(signals, vib_out);
            for (const auto& [src, n] : count_sources(signals)) {
                std::cout << src << " " << n << "\n";
            }
        } else if (*split_cmd) {
            const auto records = read_caption_records(split_data);
            const auto out = split_dataset(records, {ratios[0], ratios[1], ratios[2]}, seed);
            write_text(split_out, to_jsonl(out));
            std::map<Split, std::set<std::string>> members;
            for (const auto& r : out) {
                members[r.split].insert(r.signal_id);
            }
            for (const auto& [s, ids] : members) {
                std::cout << to_string(s) << " " << ids.size() << " signals\n";
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
