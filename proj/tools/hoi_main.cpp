// hoi: synthetic human-object-interaction pipeline driver.
//
// Subcommands: gen-data, train-tokenizer, train-lm, sample, eval,
// inspect-codebook. Every command is deterministic given (config, inputs,
// seed); run artifacts land under --out in
//   <out>/{config.json, data/, checkpoints/, logs/, samples/, reports/}.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hoi/log.hpp"
#include "hoi/metrics.hpp"
#include "hoi/motion_io.hpp"
#include "hoi/run_config.hpp"
#include "hoi/svg_plot.hpp"
#include "hoi/synthetic.hpp"
#include "hoi/tasks.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hoi;

namespace {

struct CliArgs {
    std::string config_path;
    std::string out_dir = "run/default";
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool f64 = false;
};

RunConfig effective_config(const CliArgs& args) {
    RunConfig cfg;
    if (!args.config_path.empty()) cfg = RunConfig::from_file(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    return cfg;
}

fs::path ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw io_error("cannot create directory '" + p.string() + "': " + ec.message());
    return p;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path.string() + "' for reading");
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg) {
    const fs::path out(cfg.out_dir);
    ensure_dir(out);
    cfg.save((out / "config.json").string());
    const fs::path data = ensure_dir(out / "data");

    SyntheticConfig sc;
    sc.points_per_cloud = cfg.data.points;
    sc.fps = cfg.data.fps;
    const auto samples =
        generate_synthetic_dataset(cfg.seed, cfg.data.n, cfg.data.frames, default_templates(), sc);

    const int n_train = std::max(1, static_cast<int>(cfg.data.n * cfg.data.train_fraction + 0.5));
    DatasetManifest train, test;
    train.split = Split::Train;
    test.split = Split::Test;
    std::map<std::string, int> histogram;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        write_motion((data / (s.id + "_h.hoim")).string(), s.human.frames);
        write_motion((data / (s.id + "_o.hoim")).string(), s.object.frames);
        write_pointcloud((data / (s.id + "_p.hoip")).string(), s.points);
        ManifestEntry e{s.id, s.caption, s.id + "_h.hoim", s.id + "_o.hoim", s.id + "_p.hoip"};
        (static_cast<int>(i) < n_train ? train : test).entries.push_back(e);
        histogram[s.caption]++;
    }
    write_manifest((data / "manifest_train.json").string(), train);
    write_manifest((data / "manifest_test.json").string(), test);

    json summary;
    summary["n"] = cfg.data.n;
    summary["train"] = train.entries.size();
    summary["test"] = test.entries.size();
    summary["frames"] = cfg.data.frames;
    summary["points"] = cfg.data.points;
    summary["caption_histogram"] = histogram;
    write_text(data / "dataset.summary.json", summary.dump(2) + "\n");

    std::cout << "generated " << samples.size() << " samples (" << train.entries.size()
              << " train, " << test.entries.size() << " test) under " << data.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// shared loading helpers
// ---------------------------------------------------------------------------

std::vector<HOISample> load_split(const RunConfig& cfg, Split split) {
    const fs::path manifest = fs::path(cfg.out_dir) / "data" /
                              (split == Split::Train ? "manifest_train.json" : "manifest_test.json");
    if (!fs::exists(manifest)) {
        throw config_error("missing dataset manifest '" + manifest.string() +
                           "' (run gen-data first)");
    }
    auto samples = load_samples(manifest.string(), split);
    // recover generator template ids from captions for evaluation
    for (auto& s : samples) s.template_id = caption_template_id(s.caption, default_templates());
    return samples;
}

template <typename S>
MotionTokenizer<S> load_tokenizer(const RunConfig& cfg, const std::string& modality) {
    const TokenizerConfig& tc =
        modality == "human" ? cfg.tokenizer_human : cfg.tokenizer_object;
    const fs::path ck = fs::path(cfg.out_dir) / "checkpoints" / ("tokenizer_" + modality + ".hoit");
    if (!fs::exists(ck)) {
        throw config_error("missing tokenizer checkpoint '" + ck.string() +
                           "' (run train-tokenizer --modality " + modality + " first)");
    }
    MotionTokenizer<S> tok(tc, cfg.seed + (modality == "human" ? 1 : 2));
    tok.load(read_checkpoint(ck.string()));
    return tok;
}

UnifiedVocab load_or_build_vocab(const RunConfig& cfg, bool build_if_missing) {
    const fs::path path = fs::path(cfg.out_dir) / "vocab.json";
    if (fs::exists(path)) return UnifiedVocab::load(path.string());
    if (!build_if_missing) throw config_error("missing vocab file '" + path.string() + "'");
    UnifiedVocab vocab(default_word_list(), cfg.tokenizer_human.codebook_k,
                       cfg.tokenizer_object.codebook_k);
    vocab.save(path.string());
    return vocab;
}

template <typename S>
TransformerModel<S> load_lm(const RunConfig& cfg, const fs::path& ck_path,
                            const UnifiedVocab& vocab) {
    if (!fs::exists(ck_path)) {
        throw config_error("missing model checkpoint '" + ck_path.string() + "'");
    }
    fs::path sidecar = ck_path;
    sidecar.replace_extension(".json");
    std::uint64_t vocab_hash = 0;
    int stage = 0;
    TransformerConfig mc = transformer_config_from_json(read_text(sidecar), &vocab_hash, &stage);
    if (vocab_hash != vocab.hash()) {
        throw config_error("checkpoint '" + ck_path.string() +
                           "' was trained with a different vocabulary (hash mismatch)");
    }
    TransformerModel<S> model(mc, cfg.seed);
    model.load(read_checkpoint(ck_path.string()));
    return model;
}

fs::path default_lm_checkpoint(const RunConfig& cfg, const std::string& task) {
    const fs::path ckdir = fs::path(cfg.out_dir) / "checkpoints";
    const fs::path stage2 = ckdir / ("lm_stage2_" + task + ".hoit");
    if (fs::exists(stage2)) return stage2;
    return ckdir / "lm_stage1.hoit";
}

// ---------------------------------------------------------------------------
// train-tokenizer
// ---------------------------------------------------------------------------

template <typename S>
int cmd_train_tokenizer(const RunConfig& cfg, const std::string& modality, bool resume) {
    if (modality != "human" && modality != "object") {
        throw usage_error("--modality must be 'human' or 'object'");
    }
    const auto samples = load_split(cfg, Split::Train);
    std::vector<MotionSequence> data;
    for (const auto& s : samples) {
        data.push_back(modality == "human" ? s.human.frames : s.object.frames);
    }

    const TokenizerConfig& tc = modality == "human" ? cfg.tokenizer_human : cfg.tokenizer_object;
    const fs::path ckdir = ensure_dir(fs::path(cfg.out_dir) / "checkpoints");
    const fs::path logdir = ensure_dir(fs::path(cfg.out_dir) / "logs");
    const fs::path ck = ckdir / ("tokenizer_" + modality + ".hoit");
    const fs::path sidecar = ckdir / ("tokenizer_" + modality + ".json");
    const fs::path csv = logdir / ("tokenizer_" + modality + "_losses.csv");

    MotionTokenizer<S> tok(tc, cfg.seed + (modality == "human" ? 1 : 2));
    int epoch_offset = 0, step_offset = 0;
    if (resume) {
        if (!fs::exists(ck)) throw config_error("cannot resume: no checkpoint at " + ck.string());
        tok.load(read_checkpoint(ck.string()));
        const json meta = json::parse(read_text(sidecar));
        epoch_offset = meta.value("epochs_trained", 0);
        step_offset = meta.value("steps", 0);
    }

    const auto curve = train_tokenizer(tok, data, cfg.tokenizer_epochs, cfg.seed, step_offset);

    write_checkpoint(ck.string(), tok.to_checkpoint());
    const int batches_per_epoch =
        static_cast<int>((data.size() + static_cast<std::size_t>(tc.batch) - 1) /
                         static_cast<std::size_t>(tc.batch));
    json meta;
    meta["modality"] = modality;
    meta["epochs_trained"] = epoch_offset + cfg.tokenizer_epochs;
    meta["steps"] = step_offset + cfg.tokenizer_epochs * batches_per_epoch;
    meta["codebook_k"] = tc.codebook_k;
    meta["codebook_d"] = tc.codebook_d;
    write_text(sidecar, meta.dump(2) + "\n");

    std::ostringstream os;
    if (!resume || !fs::exists(csv)) {
        os << "epoch,total,l_r,l_c,l_v,utilization\n";
    } else {
        os << read_text(csv);
    }
    for (const auto& row : curve) {
        os << (epoch_offset + row.epoch) << "," << row.total << "," << row.l_r << "," << row.l_c
           << "," << row.l_v << "," << row.utilization << "\n";
    }
    write_text(csv, os.str());

    const double util = curve.empty() ? 0.0 : curve.back().utilization;
    std::cout << "tokenizer_" << modality << ": " << cfg.tokenizer_epochs << " epochs, final loss "
              << (curve.empty() ? 0.0 : curve.back().total) << ", utilization " << util << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train-lm
// ---------------------------------------------------------------------------

template <typename S>
std::vector<TokenizedSample> tokenize_all(const std::vector<HOISample>& samples,
                                          MotionTokenizer<S>& tok_h, MotionTokenizer<S>& tok_o,
                                          const UnifiedVocab& vocab) {
    std::vector<TokenizedSample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        TokenizedSample t = tokenize_sample(s, tok_h, tok_o, vocab);
        t.template_id = s.template_id;
        out.push_back(std::move(t));
    }
    return out;
}

void write_train_log(const fs::path& path, const std::vector<TrainLogRow>& rows) {
    std::ostringstream os;
    for (const auto& r : rows) {
        json j{{"step", r.step},
               {"task", r.task},
               {"loss", r.loss},
               {"lr", r.lr},
               {"tokens_seen", r.tokens_seen}};
        os << j.dump() << "\n";
    }
    write_text(path, os.str());
}

template <typename S>
int cmd_train_lm(const RunConfig& cfg, int stage, const std::string& task_name) {
    if (stage != 1 && stage != 2) throw usage_error("--stage must be 1 or 2");
    if (stage == 2 && task_name.empty()) {
        throw usage_error("stage-2 training needs --task (one of t2hoi h2to o2th th2o to2h ho2t)");
    }
    const fs::path ckdir = ensure_dir(fs::path(cfg.out_dir) / "checkpoints");
    const fs::path logdir = ensure_dir(fs::path(cfg.out_dir) / "logs");

    auto tok_h = load_tokenizer<S>(cfg, "human");
    auto tok_o = load_tokenizer<S>(cfg, "object");
    UnifiedVocab vocab = load_or_build_vocab(cfg, /*build_if_missing=*/true);
    if (vocab.k_h() != cfg.tokenizer_human.codebook_k ||
        vocab.k_o() != cfg.tokenizer_object.codebook_k) {
        throw config_error("vocab motion code counts disagree with tokenizer configs");
    }

    const auto train_raw = load_split(cfg, Split::Train);
    auto train = tokenize_all(train_raw, tok_h, tok_o, vocab);

    TransformerConfig mc = cfg.lm;
    mc.vocab_size = vocab.size();
    mc.text_vocab_size = vocab.k_t();
    mc.geom.d_model = mc.d_model;

    TransformerModel<S> model(mc, cfg.seed);
    const StageConfig& sc = stage == 1 ? cfg.stage1 : cfg.stage2;
    LmTrainOptions opts;
    opts.epochs = sc.epochs;
    opts.lr = sc.lr;
    opts.batch = sc.batch;
    opts.weight_decay = sc.weight_decay;
    opts.seed = cfg.seed + (stage == 1 ? 101 : 202);

    std::vector<TrainLogRow> rows;
    fs::path out_ck;
    if (stage == 1) {
        model.lora_attach({sc.lora_rank, sc.lora_alpha, 0.02}, cfg.seed + 11);
        rows = stage1_train(model, train, vocab, opts);
        model.lora_merge();
        out_ck = ckdir / "lm_stage1.hoit";
    } else {
        const TaskSpec& task = task_by_name(task_name);
        model.load(read_checkpoint((ckdir / "lm_stage1.hoit").string()));
        model.lora_attach({sc.lora_rank, sc.lora_alpha, 0.02}, cfg.seed + 22);
        rows = stage2_train(model, train, task, vocab, opts);
        model.lora_merge();
        out_ck = ckdir / ("lm_stage2_" + task_name + ".hoit");
    }

    write_checkpoint(out_ck.string(), model.to_checkpoint());
    fs::path sidecar = out_ck;
    sidecar.replace_extension(".json");
    write_text(sidecar, transformer_config_to_json(mc, vocab.hash(), stage));
    write_train_log(logdir / ("lm_stage" + std::to_string(stage) +
                              (stage == 2 ? "_" + task_name : "") + ".jsonl"),
                    rows);

    const double final_loss = rows.empty() ? 0.0 : rows.back().loss;
    std::cout << "stage-" << stage << (stage == 2 ? " (" + task_name + ")" : "")
              << " trained: " << rows.size() << " log rows, final loss " << final_loss << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

struct SampleArgs {
    std::string task;
    std::string caption;
    std::string human_path, object_path, points_path;
    std::string checkpoint;
    std::string name = "sample";
    int max_new = -1;
    double temperature = -1;
    int top_k = -1;
};

template <typename S>
int cmd_sample(const RunConfig& cfg, const SampleArgs& args) {
    const TaskSpec& task = task_by_name(args.task);
    auto tok_h = load_tokenizer<S>(cfg, "human");
    auto tok_o = load_tokenizer<S>(cfg, "object");
    UnifiedVocab vocab = load_or_build_vocab(cfg, /*build_if_missing=*/false);
    const fs::path ck = args.checkpoint.empty() ? default_lm_checkpoint(cfg, args.task)
                                                : fs::path(args.checkpoint);
    auto model = load_lm<S>(cfg, ck, vocab);

    TaskConditions cond;
    if (task.conditions_on(Mod::T)) {
        if (args.caption.empty()) throw usage_error("task '" + args.task + "' needs --caption");
        cond.caption = args.caption;
    }
    if (task.conditions_on(Mod::H)) {
        if (args.human_path.empty()) throw usage_error("task '" + args.task + "' needs --human FILE");
        cond.human = read_motion(args.human_path);
    }
    if (task.conditions_on(Mod::O)) {
        if (args.object_path.empty()) throw usage_error("task '" + args.task + "' needs --object FILE");
        cond.object = read_motion(args.object_path);
    }
    if (args.points_path.empty()) {
        throw usage_error("every task involves the object and needs --points FILE");
    }
    cond.cloud = read_pointcloud(args.points_path);

    SampleParams sp;
    sp.max_new = args.max_new >= 0 ? args.max_new : cfg.decode.max_new;
    sp.temperature = args.temperature >= 0 ? args.temperature : cfg.decode.temperature;
    sp.top_k = args.top_k >= 0 ? args.top_k : cfg.decode.top_k;
    sp.seed = cfg.seed;
    sp.repair = cfg.decode.repair;

    const auto t0 = std::chrono::steady_clock::now();
    TaskOutput out = sample_task(model, tok_h, tok_o, vocab, cond, task, sp);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    const fs::path dir = ensure_dir(fs::path(cfg.out_dir) / "samples" / args.name);
    json gen;
    gen["task"] = args.task;
    gen["raw_tokens"] = out.raw_tokens;
    gen["decode"] = {{"max_new", sp.max_new},
                     {"temperature", sp.temperature},
                     {"top_k", sp.top_k},
                     {"seed", sp.seed},
                     {"repair", sp.repair}};
    gen["elapsed_ms"] = ms;
    json outputs;
    if (out.human) {
        write_motion((dir / "human.hoim").string(), *out.human);
        outputs["human"] = "human.hoim";
    }
    if (out.object) {
        write_motion((dir / "object.hoim").string(), *out.object);
        outputs["object"] = "object.hoim";
    }
    if (out.caption) {
        write_text(dir / "caption.txt", *out.caption + "\n");
        outputs["caption"] = "caption.txt";
    }
    gen["outputs"] = outputs;
    write_text(dir / "generation.json", gen.dump(2) + "\n");
    std::cout << "sampled task " << args.task << " -> " << dir.string() << " ("
              << out.raw_tokens.size() << " tokens, " << ms << " ms)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string task;
    std::string checkpoint;
    std::string manifest;
    std::string metrics;  // comma-separated subset
    bool plot = false;
    bool per_frame = false;
};

std::set<std::string> default_metric_families(const TaskSpec& task) {
    std::set<std::string> fams{"loss"};
    if (task.targets(Mod::H)) {
        fams.insert("jpe");
        fams.insert("contact");
        fams.insert("fid");
    }
    if (task.targets(Mod::O)) fams.insert("object");
    if (task.name == "t2hoi") fams.insert("rprec");
    return fams;
}

template <typename S>
int cmd_eval(const RunConfig& cfg, const EvalArgs& args) {
    const TaskSpec& task = task_by_name(args.task);

    std::set<std::string> fams;
    if (args.metrics.empty()) {
        fams = default_metric_families(task);
    } else {
        std::stringstream ss(args.metrics);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            const std::set<std::string> known{"loss", "jpe", "contact", "object", "fid", "rprec"};
            if (!known.count(item)) throw usage_error("unknown metric family '" + item + "'");
            fams.insert(item);
        }
        const auto allowed = default_metric_families(task);
        for (const auto& f : fams) {
            if (!allowed.count(f)) {
                throw usage_error("metric family '" + f + "' is incompatible with task '" +
                                  task.name + "'");
            }
        }
    }

    auto tok_h = load_tokenizer<S>(cfg, "human");
    auto tok_o = load_tokenizer<S>(cfg, "object");
    UnifiedVocab vocab = load_or_build_vocab(cfg, /*build_if_missing=*/false);
    const fs::path ck = args.checkpoint.empty() ? default_lm_checkpoint(cfg, args.task)
                                                : fs::path(args.checkpoint);
    auto model = load_lm<S>(cfg, ck, vocab);

    std::vector<HOISample> samples;
    if (args.manifest.empty()) {
        samples = load_split(cfg, Split::Test);
    } else {
        samples = load_samples(args.manifest, Split::Test);
        for (auto& s : samples) s.template_id = caption_template_id(s.caption, default_templates());
    }
    if (samples.empty()) throw config_error("evaluation manifest holds no samples");
    auto tokenized = tokenize_all(samples, tok_h, tok_o, vocab);

    const fs::path reports = ensure_dir(fs::path(cfg.out_dir) / "reports");
    SampleParams sp;
    sp.max_new = cfg.decode.max_new;
    sp.temperature = cfg.decode.temperature;
    sp.top_k = cfg.decode.top_k;
    sp.seed = cfg.seed;
    sp.repair = cfg.decode.repair;

    MetricReport report;
    json per_sample = json::array();
    ContactStats contact_sum;
    double jpe_sum = 0, mpjpe_sum = 0, ec_sum = 0, ev2v_sum = 0, ch_sum = 0;
    int motion_evals = 0, object_evals = 0;
    int valid = 0, invalid = 0;
    long pred_contact_frames = 0, gt_contact_frames = 0, total_frames = 0;
    std::vector<MotionSequence> generated_humans, gt_humans;
    std::vector<double> per_sample_ec, per_sample_contact_pred, per_sample_contact_gt;

    const bool needs_generation =
        fams.count("jpe") || fams.count("contact") || fams.count("object") || fams.count("fid");

    for (std::size_t i = 0; i < samples.size() && needs_generation; ++i) {
        const HOISample& s = samples[i];
        json row;
        row["id"] = s.id;
        TaskConditions cond;
        if (task.conditions_on(Mod::T)) cond.caption = s.caption;
        if (task.conditions_on(Mod::H)) cond.human = s.human.frames;
        if (task.conditions_on(Mod::O)) cond.object = s.object.frames;
        cond.cloud = s.points;
        try {
            TaskOutput out = sample_task(model, tok_h, tok_o, vocab, cond, task, sp);
            ++valid;
            row["valid"] = true;
            if (out.caption) row["caption"] = *out.caption;

            if (out.human && (fams.count("jpe") || fams.count("contact") || fams.count("fid"))) {
                HumanMotion gen_h;
                gen_h.frames = *out.human;
                gen_h.layout = s.human.layout;
                const int frames = std::min(gen_h.length(), s.human.length());
                // common-prefix comparison when generated length differs
                auto trim = [&](const MotionSequence& m) {
                    MotionSequence t({frames, m.dim(1)});
                    std::copy(m.data.begin(),
                              m.data.begin() + static_cast<std::size_t>(frames) * m.dim(1),
                              t.data.begin());
                    return t;
                };
                HumanMotion gen_trim;
                gen_trim.frames = trim(gen_h.frames);
                gen_trim.layout = s.human.layout;
                HumanMotion gt_trim;
                gt_trim.frames = trim(s.human.frames);
                gt_trim.layout = s.human.layout;

                if (fams.count("jpe")) {
                    const auto je = joint_errors(joints_series(gen_trim), joints_series(gt_trim),
                                                 {s.human.layout.left_hand, s.human.layout.right_hand});
                    jpe_sum += je.hand_jpe_cm;
                    mpjpe_sum += je.mpjpe_cm;
                    ++motion_evals;
                    row["hand_jpe_cm"] = je.hand_jpe_cm;
                    row["mpjpe_cm"] = je.mpjpe_cm;
                }
                if (fams.count("contact")) {
                    // predicted contact from the generated pair; ground truth
                    // from the dataset pair
                    const MotionSequence pred_obj =
                        task.targets(Mod::O) && out.object ? trim(*out.object) : trim(s.object.frames);
                    const auto pred_flags =
                        contact_flags(hands_series(gen_trim),
                                      object_points_series(pred_obj, s.points),
                                      kDefaultContactThreshold);
                    const auto gt_flags =
                        contact_flags(hands_series(gt_trim),
                                      object_points_series(trim(s.object.frames), s.points),
                                      kDefaultContactThreshold);
                    const auto stats =
                        contact_stats_from_flags(pred_flags, gt_flags, kDefaultContactThreshold);
                    contact_sum.tp += stats.tp;
                    contact_sum.fp += stats.fp;
                    contact_sum.fn += stats.fn;
                    contact_sum.tn += stats.tn;
                    long p = 0, g = 0;
                    for (char c : pred_flags) p += c;
                    for (char c : gt_flags) g += c;
                    pred_contact_frames += p;
                    gt_contact_frames += g;
                    total_frames += frames;
                    row["raw_counts"] = {{"tp", stats.tp}, {"fp", stats.fp}, {"fn", stats.fn}, {"tn", stats.tn}};
                    per_sample_contact_pred.push_back(static_cast<double>(p) / frames);
                    per_sample_contact_gt.push_back(static_cast<double>(g) / frames);
                }
                if (fams.count("fid")) {
                    generated_humans.push_back(gen_h.frames);
                    gt_humans.push_back(s.human.frames);
                }
            }
            if (out.object && fams.count("object")) {
                const int frames = std::min(out.object->dim(0), s.object.length());
                MotionSequence pred({frames, 6}), gt({frames, 6});
                std::copy(out.object->data.begin(),
                          out.object->data.begin() + static_cast<std::size_t>(frames) * 6,
                          pred.data.begin());
                std::copy(s.object.frames.data.begin(),
                          s.object.frames.data.begin() + static_cast<std::size_t>(frames) * 6,
                          gt.data.begin());
                std::vector<double> pf_ec, pf_v2v;
                const double sample_ec = e_c(pred, gt, args.per_frame ? &pf_ec : nullptr);
                const double sample_v2v = e_v2v(pred, gt, s.points, args.per_frame ? &pf_v2v : nullptr);
                double sample_ch = 0;
                for (int f = 0; f < frames; ++f) {
                    sample_ch += chamfer(transform_points(s.points, pose_from_row(pred, f)),
                                         transform_points(s.points, pose_from_row(gt, f)));
                }
                sample_ch /= frames;
                ec_sum += sample_ec;
                ev2v_sum += sample_v2v;
                ch_sum += sample_ch;
                ++object_evals;
                row["e_c"] = sample_ec;
                row["e_v2v"] = sample_v2v;
                row["e_ch"] = sample_ch;
                per_sample_ec.push_back(sample_ec);
                if (args.per_frame) {
                    row["e_c_per_frame"] = pf_ec;
                    row["e_v2v_per_frame"] = pf_v2v;
                }
            }
        } catch (const GenerationError& e) {
            ++invalid;
            row["valid"] = false;
            row["error"] = e.what();
        }
        per_sample.push_back(row);
    }

    if (fams.count("contact") && contact_sum.total() > 0) {
        const auto rates = contact_rates(contact_sum);
        report.c_prec = rates.c_prec;
        report.c_rec = rates.c_rec;
        report.c_acc = rates.c_acc;
        report.contact_pct = static_cast<double>(pred_contact_frames) / total_frames;
        report.gt_contact_pct = static_cast<double>(gt_contact_frames) / total_frames;
        report.degenerate = report.degenerate || rates.degenerate;
        report.raw_tp = contact_sum.tp;
        report.raw_fp = contact_sum.fp;
        report.raw_fn = contact_sum.fn;
        report.raw_tn = contact_sum.tn;
    }
    if (fams.count("jpe") && motion_evals > 0) {
        report.hand_jpe_cm = jpe_sum / motion_evals;
        report.mpjpe_cm = mpjpe_sum / motion_evals;
    }
    if (fams.count("object") && object_evals > 0) {
        report.e_c = ec_sum / object_evals;
        report.e_v2v = ev2v_sum / object_evals;
        report.e_ch = ch_sum / object_evals;
    }
    if (fams.count("fid") && generated_humans.size() >= 2) {
        const auto gen_f = feature_matrix(tok_h, generated_humans);
        const auto gt_f = feature_matrix(tok_h, gt_humans);
        report.fid = frechet_feature_distance(gen_f, gt_f);
        report.diversity = diversity(gen_f, cfg.eval.diversity_pairs, cfg.seed);
    }
    if (fams.count("rprec")) {
        const auto rp =
            r_precision_surrogate(model, tokenized, vocab, cfg.eval.r_precision_pool, cfg.seed);
        report.r_precision_top1 = rp.top1;
        report.r_precision_top2 = rp.top2;
        report.r_precision_top3 = rp.top3;
    }

    double heldout_loss = 0;
    if (fams.count("loss")) heldout_loss = eval_task_loss(model, tokenized, task, vocab);

    write_text(reports / ("report_" + task.name + ".json"), report.to_json());
    write_text(reports / ("report_" + task.name + ".txt"), report.to_table());
    {
        std::ostringstream os;
        for (const auto& row : per_sample) os << row.dump() << "\n";
        write_text(reports / ("per_sample_" + task.name + ".jsonl"), os.str());
    }
    json summary;
    summary["task"] = task.name;
    summary["samples"] = samples.size();
    summary["valid_generations"] = valid;
    summary["invalid_generations"] = invalid;
    summary["heldout_loss"] = heldout_loss;
    summary["checkpoint"] = ck.string();
    write_text(reports / ("eval_summary_" + task.name + ".json"), summary.dump(2) + "\n");

    if (args.plot) {
        const fs::path plots = ensure_dir(reports / "plots");
        if (!per_sample_contact_pred.empty()) {
            write_svg_chart((plots / (task.name + "_contact.svg")).string(),
                            task.name + ": contact fraction per sample",
                            {{"pred", per_sample_contact_pred}, {"gt", per_sample_contact_gt}});
        }
        if (!per_sample_ec.empty()) {
            write_svg_chart((plots / (task.name + "_object_error.svg")).string(),
                            task.name + ": object center error per sample",
                            {{"e_c", per_sample_ec}});
        }
        if (report.fid) {
            write_svg_chart((plots / (task.name + "_distribution.svg")).string(),
                            task.name + ": distribution metrics",
                            {{"fid", {*report.fid}}, {"diversity", {*report.diversity}}});
        }
    }

    std::cout << report.to_table();
    std::cout << "heldout_loss       " << heldout_loss << "\n";
    std::cout << "valid " << valid << " / invalid " << invalid << " -> " << reports.string()
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// inspect-codebook
// ---------------------------------------------------------------------------

int cmd_inspect_codebook(const std::string& ck_path) {
    const Checkpoint ck = read_checkpoint(ck_path);
    const CheckpointEntry* entries = find_entry(ck, "codebook.entries");
    const CheckpointEntry* counts = find_entry(ck, "codebook.ema_counts");
    if (!entries || !counts) {
        throw format_error("'" + ck_path + "' is not a tokenizer checkpoint (no codebook entries)");
    }
    const int k = entries->dims[0], d = entries->dims[1];
    double min_norm = 1e300, max_norm = 0, mean_norm = 0;
    for (int e = 0; e < k; ++e) {
        double n2 = 0;
        for (int j = 0; j < d; ++j) {
            const double v = entries->data[static_cast<std::size_t>(e) * d + j];
            n2 += v * v;
        }
        const double n = std::sqrt(n2);
        min_norm = std::min(min_norm, n);
        max_norm = std::max(max_norm, n);
        mean_norm += n / k;
    }
    int live = 0;
    double count_sum = 0;
    for (float c : counts->data) {
        if (c >= 1.0f) ++live;
        count_sum += c;
    }
    std::cout << "codebook: " << k << " x " << d << "\n";
    std::cout << "entry norm min/mean/max: " << min_norm << " / " << mean_norm << " / " << max_norm
              << "\n";
    std::cout << "ema counts: total " << count_sum << ", entries with count >= 1: " << live << " ("
              << (100.0 * live / k) << "%)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic human-object interaction pipeline"};
    app.require_subcommand(1);

    CliArgs args;
    app.add_option("--config", args.config_path, "JSON run configuration");
    app.add_option("--out", args.out_dir, "run directory");
    auto* seed_opt = app.add_option("--seed", args.seed, "seed override");
    app.add_flag("--f64", args.f64, "gradient-check precision mode (double everywhere)");

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");

    auto* tt = app.add_subcommand("train-tokenizer", "train a motion tokenizer");
    std::string modality;
    bool resume = false;
    tt->add_option("--modality", modality, "human|object")->required();
    tt->add_flag("--resume", resume, "continue from the existing checkpoint");

    auto* tl = app.add_subcommand("train-lm", "train the language model");
    int stage = 1;
    std::string task_name;
    tl->add_option("--stage", stage, "1|2")->required();
    tl->add_option("--task", task_name, "stage-2 task name");

    auto* smp = app.add_subcommand("sample", "conditional generation");
    SampleArgs sargs;
    smp->add_option("--task", sargs.task, "task name")->required();
    smp->add_option("--caption", sargs.caption, "text condition");
    smp->add_option("--human", sargs.human_path, "human motion condition (HOIM)");
    smp->add_option("--object", sargs.object_path, "object motion condition (HOIM)");
    smp->add_option("--points", sargs.points_path, "object point cloud (HOIP)");
    smp->add_option("--checkpoint", sargs.checkpoint, "model checkpoint override");
    smp->add_option("--name", sargs.name, "sample directory name");
    smp->add_option("--max-new", sargs.max_new, "decode length cap");
    smp->add_option("--temperature", sargs.temperature, "sampling temperature (0 = greedy)");
    smp->add_option("--top-k", sargs.top_k, "top-k truncation (0 = full)");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    EvalArgs eargs;
    ev->add_option("--task", eargs.task, "task name")->required();
    ev->add_option("--checkpoint", eargs.checkpoint, "model checkpoint override");
    ev->add_option("--manifest", eargs.manifest, "test manifest override");
    ev->add_option("--metrics", eargs.metrics, "comma-separated metric families");
    ev->add_flag("--plot", eargs.plot, "emit SVG charts");
    ev->add_flag("--per-frame", eargs.per_frame, "dump per-frame error series");

    auto* ins = app.add_subcommand("inspect-codebook", "print codebook statistics");
    std::string inspect_ck;
    ins->add_option("--checkpoint", inspect_ck, "tokenizer checkpoint")->required();

    try {
        app.parse(argc, argv);
        args.seed_set = seed_opt->count() > 0;
        const RunConfig cfg = effective_config(args);

        if (gen->parsed()) return cmd_gen_data(cfg);
        if (tt->parsed()) {
            return args.f64 ? cmd_train_tokenizer<double>(cfg, modality, resume)
                            : cmd_train_tokenizer<float>(cfg, modality, resume);
        }
        if (tl->parsed()) {
            return args.f64 ? cmd_train_lm<double>(cfg, stage, task_name)
                            : cmd_train_lm<float>(cfg, stage, task_name);
        }
        if (smp->parsed()) {
            return args.f64 ? cmd_sample<double>(cfg, sargs) : cmd_sample<float>(cfg, sargs);
        }
        if (ev->parsed()) {
            return args.f64 ? cmd_eval<double>(cfg, eargs) : cmd_eval<float>(cfg, eargs);
        }
        if (ins->parsed()) return cmd_inspect_codebook(inspect_ck);
        throw usage_error("no subcommand given");
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "E_USAGE: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "E_INTERNAL: " << e.what() << "\n";
        return 1;
    }
}
