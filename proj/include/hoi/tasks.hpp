#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hoi/log.hpp"
#include "hoi/motion.hpp"
#include "hoi/synthetic.hpp"
#include "hoi/transformer.hpp"
#include "hoi/vocab.hpp"
#include "hoi/vqvae.hpp"

namespace hoi {

enum class Mod { T, H, O };

// One conditional framing: condition modalities map to instruction-framed
// source tokens, the remaining modalities become the scored target.
struct TaskSpec {
    std::string name;
    std::vector<Mod> condition;  // fixed (T, H, O) order
    std::vector<Mod> target;     // fixed (T, H, O) order
    std::string instruction;

    bool involves(Mod m) const {
        return std::find(condition.begin(), condition.end(), m) != condition.end() ||
               std::find(target.begin(), target.end(), m) != target.end();
    }
    bool conditions_on(Mod m) const {
        return std::find(condition.begin(), condition.end(), m) != condition.end();
    }
    bool targets(Mod m) const {
        return std::find(target.begin(), target.end(), m) != target.end();
    }
};

// The six nonempty proper condition subsets of {T, H, O}.
inline const std::vector<TaskSpec>& enumerate_tasks() {
    static const std::vector<TaskSpec> kTasks = {
        {"t2hoi", {Mod::T}, {Mod::H, Mod::O},
         "please generate a human object interaction sequence from the following text description"},
        {"h2to", {Mod::H}, {Mod::T, Mod::O},
         "please generate a text description and object motion for the following human motion"},
        {"o2th", {Mod::O}, {Mod::T, Mod::H},
         "please generate a text description and human motion for the following object motion"},
        {"th2o", {Mod::T, Mod::H}, {Mod::O},
         "please generate object motion for the following text description and human motion"},
        {"to2h", {Mod::T, Mod::O}, {Mod::H},
         "please generate human motion that corresponds to the following text description and object motion"},
        {"ho2t", {Mod::H, Mod::O}, {Mod::T},
         "please generate a text description for the following human object interaction sequence"},
    };
    return kTasks;
}

inline const TaskSpec& task_by_name(const std::string& name) {
    for (const auto& t : enumerate_tasks()) {
        if (t.name == name) return t;
    }
    std::string names;
    for (const auto& t : enumerate_tasks()) names += t.name + " ";
    throw usage_error("unknown task '" + name + "' (expected one of: " + names + ")");
}

// Closed word list: caption vocabulary plus instruction vocabulary, in a
// fixed order so the layout is reproducible.
inline std::vector<std::string> default_word_list() {
    std::vector<std::string> words = caption_word_list();
    for (const char* w : {"please", "generate", "a", "human", "object", "interaction",
                          "sequence", "from", "following", "text", "description", "and",
                          "motion", "for", "that", "corresponds"}) {
        words.push_back(w);
    }
    return words;
}

// Dataset sample reduced to token space once, ahead of training.
struct TokenizedSample {
    std::string id;
    std::string caption;
    std::vector<int> caption_ids;
    std::vector<int> h_codes;
    std::vector<int> o_codes;
    ObjectPointCloud cloud;
    int template_id = -1;
};

template <typename S>
TokenizedSample tokenize_sample(const HOISample& sample, MotionTokenizer<S>& tok_h,
                                MotionTokenizer<S>& tok_o, const UnifiedVocab& vocab) {
    TokenizedSample out;
    out.id = sample.id;
    out.caption = sample.caption;
    out.caption_ids = vocab.encode_caption(sample.caption);
    out.h_codes = tok_h.encode_indices(sample.human.frames);
    out.o_codes = tok_o.encode_indices(sample.object.frames);
    out.cloud = sample.points;
    out.template_id = sample.template_id;
    return out;
}

struct AssembledExample {
    std::vector<int> source;
    std::vector<int> target;
    int ogt_pos = -1;
    bool needs_geom = false;

    std::vector<int> full() const {
        std::vector<int> t = source;
        t.insert(t.end(), target.begin(), target.end());
        return t;
    }

    // Next-token mask over full().size()-1 positions: exactly the target
    // segment is scored.
    std::vector<char> loss_mask() const {
        const std::size_t total = source.size() + target.size();
        std::vector<char> mask(total - 1, 0);
        for (std::size_t i = source.size() - 1; i < total - 1; ++i) mask[i] = 1;
        return mask;
    }
};

// source = [BOS] instruction [OGT] conditions(T, H, O); target = targets + [EOS].
inline AssembledExample assemble_tokens(const TokenizedSample& s, const TaskSpec& task,
                                        const UnifiedVocab& vocab) {
    if (task.involves(Mod::O) && s.cloud.count() < 1) {
        throw domain_error("task '" + task.name + "' involves object motion but sample '" + s.id +
                           "' has no point cloud");
    }
    AssembledExample ex;
    ex.source.push_back(vocab.special(SpecialToken::Bos));
    for (int id : vocab.encode_caption(task.instruction)) ex.source.push_back(id);
    if (s.cloud.count() > 0) {
        ex.ogt_pos = static_cast<int>(ex.source.size());
        ex.needs_geom = true;
        ex.source.push_back(vocab.special(SpecialToken::Ogt));
    }
    for (Mod m : task.condition) {
        switch (m) {
            case Mod::T:
                ex.source.insert(ex.source.end(), s.caption_ids.begin(), s.caption_ids.end());
                break;
            case Mod::H: {
                const auto w = vocab.wrap_motion(s.h_codes, TokenModality::Human);
                ex.source.insert(ex.source.end(), w.begin(), w.end());
                break;
            }
            case Mod::O: {
                const auto w = vocab.wrap_motion(s.o_codes, TokenModality::Object);
                ex.source.insert(ex.source.end(), w.begin(), w.end());
                break;
            }
        }
    }
    for (Mod m : task.target) {
        switch (m) {
            case Mod::T:
                ex.target.insert(ex.target.end(), s.caption_ids.begin(), s.caption_ids.end());
                break;
            case Mod::H: {
                const auto w = vocab.wrap_motion(s.h_codes, TokenModality::Human);
                ex.target.insert(ex.target.end(), w.begin(), w.end());
                break;
            }
            case Mod::O: {
                const auto w = vocab.wrap_motion(s.o_codes, TokenModality::Object);
                ex.target.insert(ex.target.end(), w.begin(), w.end());
                break;
            }
        }
    }
    ex.target.push_back(vocab.special(SpecialToken::Eos));
    return ex;
}

template <typename S>
AssembledExample assemble(const HOISample& sample, const TaskSpec& task, MotionTokenizer<S>& tok_h,
                          MotionTokenizer<S>& tok_o, const UnifiedVocab& vocab) {
    return assemble_tokens(tokenize_sample(sample, tok_h, tok_o, vocab), task, vocab);
}

// Structured-generation failure; carries the raw tokens for diagnosis.
class GenerationError : public Error {
public:
    GenerationError(const std::string& msg, std::vector<int> tokens)
        : Error("E_GEN", msg + " [tokens:" + join(tokens) + "]"), tokens_(std::move(tokens)) {}
    const std::vector<int>& tokens() const { return tokens_; }

private:
    static std::string join(const std::vector<int>& t) {
        std::ostringstream os;
        for (int id : t) os << " " << id;
        return os.str();
    }
    std::vector<int> tokens_;
};

struct Disassembled {
    std::vector<int> caption_ids;
    std::vector<int> h_codes;
    std::vector<int> o_codes;
};

// Parses a target-token stream back into per-modality payloads, validating
// span structure. Accepts a missing trailing EOS when every span closed
// (greedy decoding stops at the final span closer).
inline Disassembled disassemble_target(const std::vector<int>& tokens, const TaskSpec& task,
                                       const UnifiedVocab& vocab) {
    Disassembled out;
    std::size_t at = 0;
    auto fail = [&](const std::string& msg) -> GenerationError {
        return GenerationError("malformed generation for task '" + task.name + "': " + msg,
                               tokens);
    };
    for (Mod m : task.target) {
        if (m == Mod::T) {
            while (at < tokens.size()) {
                const TokenClass tc = vocab.classify_token(tokens[at]);
                if (tc.modality == TokenModality::Text) {
                    out.caption_ids.push_back(tokens[at]);
                    ++at;
                } else if (tc.modality == TokenModality::Special &&
                           tokens[at] == vocab.special(SpecialToken::Unk)) {
                    out.caption_ids.push_back(tokens[at]);
                    ++at;
                } else {
                    break;
                }
            }
            if (out.caption_ids.empty()) throw fail("empty text span");
            continue;
        }
        const bool human = m == Mod::H;
        const int open = vocab.special(human ? SpecialToken::Bohm : SpecialToken::Boom);
        const int close = vocab.special(human ? SpecialToken::Eohm : SpecialToken::Eoom);
        if (at >= tokens.size() || tokens[at] != open) {
            throw fail(std::string("expected ") + (human ? "<bohm>" : "<boom>") + " at position " +
                       std::to_string(at));
        }
        ++at;
        std::vector<int>& codes = human ? out.h_codes : out.o_codes;
        while (at < tokens.size() && tokens[at] != close) {
            const TokenClass tc = vocab.classify_token(tokens[at]);
            if (tc.modality != (human ? TokenModality::Human : TokenModality::Object)) {
                throw fail("token " + std::to_string(tokens[at]) + " inside a " +
                           (human ? "human" : "object") + " span");
            }
            codes.push_back(tc.local_index);
            ++at;
        }
        if (at >= tokens.size()) throw fail("unterminated motion span");
        ++at;  // consume closer
        if (codes.empty()) throw fail("empty motion span");
    }
    if (at < tokens.size()) {
        if (tokens[at] != vocab.special(SpecialToken::Eos)) {
            throw fail("unexpected trailing token " + std::to_string(tokens[at]));
        }
        ++at;
        if (at < tokens.size()) throw fail("tokens after <eos>");
    }
    return out;
}

// Repair pass: keep the first well-formed realization of each expected span,
// skipping junk between spans. Used only when decode params ask for it.
inline std::vector<int> repair_target(const std::vector<int>& tokens, const TaskSpec& task,
                                      const UnifiedVocab& vocab) {
    std::vector<int> fixed;
    std::size_t at = 0;
    for (Mod m : task.target) {
        if (m == Mod::T) {
            while (at < tokens.size() &&
                   vocab.classify_token(tokens[at]).modality == TokenModality::Text) {
                fixed.push_back(tokens[at]);
                ++at;
            }
            continue;
        }
        const bool human = m == Mod::H;
        const int open = vocab.special(human ? SpecialToken::Bohm : SpecialToken::Boom);
        const int close = vocab.special(human ? SpecialToken::Eohm : SpecialToken::Eoom);
        while (at < tokens.size() && tokens[at] != open) ++at;
        if (at >= tokens.size()) break;
        fixed.push_back(tokens[at]);
        ++at;
        while (at < tokens.size() && tokens[at] != close) {
            const TokenClass tc = vocab.classify_token(tokens[at]);
            if (tc.modality == (human ? TokenModality::Human : TokenModality::Object)) {
                fixed.push_back(tokens[at]);
            }
            ++at;
        }
        if (at < tokens.size()) {
            fixed.push_back(tokens[at]);
            ++at;
        }
    }
    fixed.push_back(vocab.special(SpecialToken::Eos));
    return fixed;
}

inline std::set<int> stop_tokens_for(const TaskSpec& task, const UnifiedVocab& vocab) {
    std::set<int> stops{vocab.special(SpecialToken::Eos)};
    const Mod last = task.target.back();
    if (last == Mod::H) stops.insert(vocab.special(SpecialToken::Eohm));
    if (last == Mod::O) stops.insert(vocab.special(SpecialToken::Eoom));
    return stops;
}

// ---------------------------------------------------------------------------
// training orchestration
// ---------------------------------------------------------------------------

struct LmTrainOptions {
    int epochs = 20;
    double lr = 1e-3;
    int batch = 8;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
};

struct TrainLogRow {
    int step = 0;
    std::string task;
    double loss = 0;
    double lr = 0;
    std::int64_t tokens_seen = 0;
};

namespace detail_tasks {

template <typename S>
struct BatchLoss {
    Var<S> weighted;   // sum of per-sample loss * positions
    double positions = 0;
};

template <typename S>
void accumulate_example(TransformerModel<S>& model, const TokenizedSample& s,
                        const TaskSpec& task, const UnifiedVocab& vocab, BatchLoss<S>& acc,
                        double& sample_loss) {
    const AssembledExample ex = assemble_tokens(s, task, vocab);
    const auto tokens = ex.full();
    Var<S> feat;
    if (ex.needs_geom) feat = model.geom.encode_points(s.cloud);
    Var<S> logits = model.forward(tokens, ex.ogt_pos, feat);
    const auto mask = ex.loss_mask();
    Var<S> loss = model.lm_loss(logits, tokens, mask);
    sample_loss = static_cast<double>(loss.val().data[0]);
    double n_pos = 0;
    for (char m : mask) n_pos += m;
    Var<S> weighted = scale(loss, static_cast<S>(n_pos));
    acc.weighted = acc.weighted.defined() ? add(acc.weighted, weighted) : weighted;
    acc.positions += n_pos;
}

}  // namespace detail_tasks

// Position-weighted mean LM loss over a sample set, no gradient updates.
template <typename S>
double eval_task_loss(TransformerModel<S>& model, const std::vector<TokenizedSample>& samples,
                      const TaskSpec& task, const UnifiedVocab& vocab) {
    if (samples.empty()) throw domain_error("eval_task_loss: empty sample set");
    double total = 0, positions = 0;
    for (const auto& s : samples) {
        const AssembledExample ex = assemble_tokens(s, task, vocab);
        const auto tokens = ex.full();
        Var<S> feat;
        if (ex.needs_geom) feat = model.geom.encode_points(s.cloud);
        Var<S> logits = model.forward(tokens, ex.ogt_pos, feat, /*build_graph=*/false);
        const auto mask = ex.loss_mask();
        Var<S> loss = model.lm_loss(logits, tokens, mask);
        double n_pos = 0;
        for (char m : mask) n_pos += m;
        total += static_cast<double>(loss.val().data[0]) * n_pos;
        positions += n_pos;
    }
    return total / positions;
}

// Stage 1: every sample draws a task uniformly at random per epoch (seeded);
// optimizes the masked next-token objective over trainable parameters.
template <typename S>
std::vector<TrainLogRow> stage1_train(TransformerModel<S>& model,
                                      const std::vector<TokenizedSample>& train,
                                      const UnifiedVocab& vocab, const LmTrainOptions& opts) {
    if (!model.adapters_attached()) {
        throw train_error("stage-1 training requires attached LoRA adapters");
    }
    return detail_train(model, train, vocab, opts, nullptr);
}

// Stage 2: fixed-task fine-tuning on merged stage-1 weights.
template <typename S>
std::vector<TrainLogRow> stage2_train(TransformerModel<S>& model,
                                      const std::vector<TokenizedSample>& train,
                                      const TaskSpec& task, const UnifiedVocab& vocab,
                                      const LmTrainOptions& opts) {
    if (!model.adapters_attached()) {
        throw train_error("stage-2 training requires attached LoRA adapters");
    }
    return detail_train(model, train, vocab, opts, &task);
}

template <typename S>
std::vector<TrainLogRow> detail_train(TransformerModel<S>& model,
                                      const std::vector<TokenizedSample>& train,
                                      const UnifiedVocab& vocab, const LmTrainOptions& opts,
                                      const TaskSpec* fixed_task) {
    if (train.empty()) throw train_error("LM training needs a nonempty dataset");
    const auto& tasks = enumerate_tasks();
    typename AdamW<S>::Options aopts;
    aopts.lr = static_cast<S>(opts.lr);
    aopts.weight_decay = static_cast<S>(opts.weight_decay);
    AdamW<S> optimizer(aopts);
    auto params = model.params();

    std::vector<TrainLogRow> log;
    int step = 0;
    std::int64_t tokens_seen = 0;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        Rng rng = Rng::derive(opts.seed, 0xa5a5 + static_cast<std::uint64_t>(epoch));
        std::vector<int> order(train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::vector<int> assignment(train.size(), 0);
        if (!fixed_task) {
            for (auto& a : assignment) a = static_cast<int>(rng.uniform_int(tasks.size()));
        }
        rng.shuffle(order);

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(opts.batch)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(opts.batch));
            zero_grads(params);
            detail_tasks::BatchLoss<S> acc;
            std::vector<std::pair<std::string, double>> task_losses;
            for (std::size_t bi = start; bi < end; ++bi) {
                const TokenizedSample& s = train[static_cast<std::size_t>(order[bi])];
                const TaskSpec& task =
                    fixed_task ? *fixed_task
                               : tasks[static_cast<std::size_t>(
                                     assignment[static_cast<std::size_t>(order[bi])])];
                double sample_loss = 0;
                detail_tasks::accumulate_example(model, s, task, vocab, acc, sample_loss);
                task_losses.push_back({task.name, sample_loss});
            }
            Var<S> loss = scale(acc.weighted, static_cast<S>(1.0 / acc.positions));
            const double loss_v = static_cast<double>(loss.val().data[0]);
            if (!std::isfinite(loss_v)) {
                throw train_error("NaN LM loss at epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(step));
            }
            backward(loss);
            optimizer.step(params);
            tokens_seen += static_cast<std::int64_t>(acc.positions);

            // one log row per task present in the batch
            std::vector<std::string> seen;
            for (const auto& [name, l] : task_losses) {
                if (std::find(seen.begin(), seen.end(), name) != seen.end()) continue;
                seen.push_back(name);
                double sum = 0;
                int count = 0;
                for (const auto& [n2, l2] : task_losses) {
                    if (n2 == name) {
                        sum += l2;
                        ++count;
                    }
                }
                log.push_back({step, name, sum / count, opts.lr, tokens_seen});
            }
            ++step;
        }
        log_info("lm epoch " + std::to_string(epoch) + " done, steps " + std::to_string(step));
    }
    return log;
}

// ---------------------------------------------------------------------------
// end-to-end conditional sampling
// ---------------------------------------------------------------------------

struct TaskConditions {
    std::optional<std::string> caption;
    std::optional<MotionSequence> human;
    std::optional<MotionSequence> object;
    std::optional<ObjectPointCloud> cloud;
};

struct TaskOutput {
    std::optional<std::string> caption;
    std::optional<MotionSequence> human;
    std::optional<MotionSequence> object;
    std::vector<int> raw_tokens;
};

struct SampleParams {
    int max_new = 160;
    double temperature = 0.0;
    int top_k = 0;
    std::uint64_t seed = 0;
    bool repair = false;
};

// Generates the target modalities for one conditioned query, validates span
// structure, and decodes motion tokens through the matching tokenizer.
template <typename S>
TaskOutput sample_task(TransformerModel<S>& model, MotionTokenizer<S>& tok_h,
                       MotionTokenizer<S>& tok_o, const UnifiedVocab& vocab,
                       const TaskConditions& conditions, const TaskSpec& task,
                       const SampleParams& params) {
    if (task.conditions_on(Mod::T) != conditions.caption.has_value()) {
        throw usage_error("task '" + task.name + "' " +
                          (task.conditions_on(Mod::T) ? "requires" : "does not take") +
                          " a caption condition");
    }
    if (task.conditions_on(Mod::H) != conditions.human.has_value()) {
        throw usage_error("task '" + task.name + "' " +
                          (task.conditions_on(Mod::H) ? "requires" : "does not take") +
                          " a human motion condition");
    }
    if (task.conditions_on(Mod::O) != conditions.object.has_value()) {
        throw usage_error("task '" + task.name + "' " +
                          (task.conditions_on(Mod::O) ? "requires" : "does not take") +
                          " an object motion condition");
    }
    if (task.involves(Mod::O) && !conditions.cloud.has_value()) {
        throw usage_error("task '" + task.name + "' involves object motion and needs a point cloud");
    }

    TokenizedSample s;
    s.id = "query";
    if (conditions.caption) {
        s.caption = *conditions.caption;
        s.caption_ids = vocab.encode_caption(*conditions.caption);
    }
    if (conditions.human) s.h_codes = tok_h.encode_indices(*conditions.human);
    if (conditions.object) s.o_codes = tok_o.encode_indices(*conditions.object);
    if (conditions.cloud) s.cloud = *conditions.cloud;

    const AssembledExample ex = assemble_tokens(s, task, vocab);
    Var<S> feat;
    if (ex.needs_geom) feat = model.geom.encode_points(s.cloud);

    typename TransformerModel<S>::DecodeParams dp;
    dp.max_new = params.max_new;
    dp.temperature = params.temperature;
    dp.top_k = params.top_k;
    dp.seed = params.seed;
    std::vector<int> generated =
        model.generate(ex.source, ex.ogt_pos, feat, stop_tokens_for(task, vocab), dp);

    if (params.repair) generated = repair_target(generated, task, vocab);
    const Disassembled parts = disassemble_target(generated, task, vocab);

    TaskOutput out;
    out.raw_tokens = generated;
    if (task.targets(Mod::T)) out.caption = vocab.decode_words(parts.caption_ids);
    if (task.targets(Mod::H)) out.human = tok_h.decode_indices(parts.h_codes);
    if (task.targets(Mod::O)) out.object = tok_o.decode_indices(parts.o_codes);
    return out;
}

}  // namespace hoi
