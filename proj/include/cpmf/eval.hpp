#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cpmf {

// ---------------------------------------------------------------------------
// Task instances

enum class ClassificationTask { tnews, iflytek, ocnli };

struct ClassificationInstance {
  ClassificationTask task = ClassificationTask::tnews;
  std::string text;   // P, or S1 for OCNLI
  std::string text2;  // S2, OCNLI only
  std::string gold_label;
  std::vector<std::string> candidates;  // all label names of the dataset
};

// Blank marker used in ChID passages.
inline constexpr const char* kChidBlankMarker = "#idiom#";

struct ChidBlank {
  std::vector<std::string> candidates;  // exactly 10
  std::size_t gold = 0;                 // 0-based index into candidates
};

struct ChidInstance {
  std::string passage;  // holds one marker per blank
  std::vector<ChidBlank> blanks;
};

struct QAInstance {
  std::string passage;
  std::string question;
  std::vector<std::string> golds;  // >= 1 reference answers
};

struct DialoguePair {
  std::string post;
  std::string response;
};

struct EntityTriple {
  std::string head, relation, tail;
};

class WordEmbeddings {
 public:
  static WordEmbeddings load(const std::string& path);
  static WordEmbeddings from_entries(
      const std::vector<std::pair<std::string, std::vector<double>>>& entries);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  const std::vector<double>* find(const std::string& token) const;

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

// Per-task report: rendered prompts and predictions per instance plus the
// metric map, written as CSV.
struct EvalReport {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::pair<std::string, double>> metrics;

  void add_metric(const std::string& name, double value) {
    metrics.emplace_back(name, value);
  }
  void write_csv(const std::string& path) const;
};

// Perplexity of a full text.
using PplScorer = std::function<double(const std::string&)>;
// Perplexity of a rendered template; the second argument is the byte offset
// where the completion part starts (used by --score-span completion).
using TemplateScorer = std::function<double(const std::string&, std::size_t)>;
// Text completion for a prompt.
using Generator = std::function<std::string(const std::string&)>;

// ---------------------------------------------------------------------------
// Templates and protocols

struct RenderedTemplate {
  std::string text;
  std::size_t completion_offset = 0;  // byte offset of the trailing text slot
};

RenderedTemplate render_template(const ClassificationInstance& instance,
                                 const std::string& label);

// Lowest mean perplexity wins; ties go to the lowest candidate index.
std::string classify_by_ppl(const TemplateScorer& scorer,
                            const ClassificationInstance& instance,
                            const std::vector<std::string>& candidates);

// TNEWS/IFLYTEK protocol: per repeat, k_false seeded distractors join the
// gold label for a (k_false+1)-way classification; returns the mean accuracy
// over repeats.
double subsample_eval(const std::vector<ClassificationInstance>& instances,
                      const TemplateScorer& scorer, std::size_t k_false,
                      std::size_t repeats, std::uint64_t seed,
                      EvalReport* report = nullptr);

double accuracy(const std::vector<std::string>& preds,
                const std::vector<std::string>& golds);

// Removes every blank marker except the target's (zero-width removal).
std::string chid_isolate(const std::string& passage, std::size_t target_blank);

// Per blank: fill each candidate into the isolated passage, rank by
// perplexity, return the argmin index per blank.
std::vector<std::size_t> chid_unsupervised(const PplScorer& scorer,
                                           const ChidInstance& instance);

// "选项1:I1 ... 选项10:I10 P 答案是:" (exactly 10 candidates).
std::string chid_supervised_prompt(const std::string& passage,
                                   const std::vector<std::string>& candidates);

enum class ChidTarget { option_number, idiom_text };

// Fine-tuning target for a blank under the supervised template.
std::string chid_supervised_target(const ChidBlank& blank, ChidTarget mode);

// "Context: p1 Response: r1 ... Context: post Response:" (exactly 4 pairs).
std::string dialogue_prompt(const std::vector<DialoguePair>& exemplars,
                            const std::string& post);

// Zero-shot "{passage}\n问：{question}\n答："; one-shot prefixes the exemplar
// block (with its answer) in the same shape.
std::string qa_prompt(const std::string& passage, const std::string& question,
                      const std::optional<QAInstance>& exemplar = std::nullopt);

// Character-level bag-overlap F1 / exact match, max over references, after
// stripping whitespace and punctuation.
double qa_f1(const std::string& pred, const std::vector<std::string>& golds);
double qa_em(const std::string& pred, const std::vector<std::string>& golds);

// Lines "head relation tail" for each exemplar triple, then "head relation "
// (trailing space) for the query. All triples must share the query relation.
std::string entity_prompt(const std::vector<EntityTriple>& triples,
                          const std::string& query_head,
                          const std::string& query_relation);

// Character-level BLEU-1: modified unigram precision times the brevity
// penalty (closest reference length).
double bleu1(const std::string& pred, const std::vector<std::string>& refs);

// Pooled token-level n-gram diversity over all responses.
std::pair<std::size_t, double> distinct_n(
    const std::vector<std::string>& responses, std::size_t n);

// Tokens for the diversity and embedding metrics: whitespace-separated runs,
// with CJK-range characters split out one per token.
std::vector<std::string> tokenize_mixed(const std::string& text);

double emb_average(const std::string& response, const std::string& reference,
                   const WordEmbeddings& emb);
double vector_extrema(const std::string& response, const std::string& reference,
                      const WordEmbeddings& emb);
double greedy_matching(const std::string& response, const std::string& reference,
                       const WordEmbeddings& emb);

// ---------------------------------------------------------------------------
// Data files (UTF-8, tab-separated with a header line)

std::vector<ClassificationInstance> load_classification(
    const std::string& path, ClassificationTask task);
std::vector<ChidInstance> load_chid(const std::string& path);
std::vector<QAInstance> load_qa(const std::string& path);
std::vector<DialoguePair> load_dialogue(const std::string& path);
std::vector<EntityTriple> load_entity(const std::string& path);

// ---------------------------------------------------------------------------
// Task runners

EvalReport run_classification(const std::vector<ClassificationInstance>& instances,
                              const TemplateScorer& scorer,
                              ClassificationTask task, std::uint64_t seed);

EvalReport run_chid_unsupervised(const std::vector<ChidInstance>& instances,
                                 const PplScorer& scorer);

EvalReport run_qa(const std::vector<QAInstance>& instances,
                  const Generator& generator, bool one_shot,
                  std::uint64_t seed);

EvalReport run_dialogue(const std::vector<DialoguePair>& pairs,
                        const Generator& generator,
                        const WordEmbeddings* embeddings, std::uint64_t seed);

EvalReport run_entity(const std::vector<EntityTriple>& triples,
                      const Generator& generator, std::size_t n_exemplars,
                      std::uint64_t seed);

}  // namespace cpmf
