#include "cpmf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "cpmf/errors.hpp"
#include "cpmf/rng.hpp"
#include "cpmf/utf8.hpp"

namespace cpmf {

namespace {

const std::set<char32_t> kPunctuation = {
    // ASCII
    U'!', U'"', U'#', U'$', U'%', U'&', U'\'', U'(', U')', U'*', U'+', U',',
    U'-', U'.', U'/', U':', U';', U'<', U'=', U'>', U'?', U'@', U'[', U'\\',
    U']', U'^', U'_', U'`', U'{', U'|', U'}', U'~',
    // CJK and general punctuation
    U'，', U'。', U'！', U'？', U'；', U'：',
    U'、', U'“', U'”', U'‘', U'’', U'（',
    U'）', U'《', U'》', U'【', U'】', U'「',
    U'」', U'『', U'』', U'〈', U'〉', U'〔',
    U'〕', U'·', U'…', U'—', U'～', U'・',
    U'＂', U'＇', U'．'};

bool is_space_cp(char32_t cp) {
  return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' ||
         cp == U'　';
}

std::vector<char32_t> codepoints(const std::string& s) {
  std::vector<char32_t> cps;
  std::size_t pos = 0;
  while (pos < s.size()) cps.push_back(utf8::decode_at_lenient(s, pos));
  return cps;
}

// Whitespace and punctuation stripped, for the QA metrics.
std::vector<char32_t> normalize_chars(const std::string& s) {
  std::vector<char32_t> out;
  for (char32_t cp : codepoints(s)) {
    if (is_space_cp(cp) || kPunctuation.contains(cp)) continue;
    out.push_back(cp);
  }
  return out;
}

std::map<char32_t, std::size_t> char_bag(const std::vector<char32_t>& chars) {
  std::map<char32_t, std::size_t> bag;
  for (char32_t c : chars) ++bag[c];
  return bag;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string first_line(const std::string& text) {
  std::string out = text.substr(0, text.find('\n'));
  const auto b = out.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = out.find_last_not_of(" \t\r");
  return out.substr(b, e - b + 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// Embeddings

WordEmbeddings WordEmbeddings::from_entries(
    const std::vector<std::pair<std::string, std::vector<double>>>& entries) {
  WordEmbeddings emb;
  for (const auto& [token, vec] : entries) {
    if (emb.dim_ == 0) emb.dim_ = vec.size();
    if (vec.size() != emb.dim_ || vec.empty())
      throw ShapeError("embedding dimension mismatch for token " + token);
    for (double v : vec) {
      if (!std::isfinite(v)) throw NonFiniteError("embedding of " + token);
    }
    emb.vectors_[token] = vec;
  }
  return emb;
}

WordEmbeddings WordEmbeddings::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file: " + path);
  std::size_t count = 0, dim = 0;
  if (!(in >> count >> dim) || dim == 0)
    throw FormatError("embedding file must start with 'count dim'");
  std::vector<std::pair<std::string, std::vector<double>>> entries;
  entries.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string token;
    if (!(in >> token))
      throw FormatError("embedding file truncated at entry " +
                        std::to_string(i));
    std::vector<double> vec(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      if (!(in >> vec[j]))
        throw FormatError("embedding vector truncated for token " + token);
    }
    entries.emplace_back(std::move(token), std::move(vec));
  }
  return from_entries(entries);
}

const std::vector<double>* WordEmbeddings::find(const std::string& token) const {
  auto it = vectors_.find(token);
  return it == vectors_.end() ? nullptr : &it->second;
}

void EvalReport::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report: " + path);
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out << ',';
    out << csv_escape(columns[i]);
  }
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << csv_escape(row[i]);
    }
    out << '\n';
  }
  if (!metrics.empty()) {
    std::ofstream mout(path + ".metrics.csv", std::ios::binary);
    if (!mout) throw IoError("cannot write metrics beside " + path);
    mout << "metric,value\n";
    for (const auto& [name, value] : metrics) {
      mout << csv_escape(name) << ',' << format_double(value) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Templates

RenderedTemplate render_template(const ClassificationInstance& instance,
                                 const std::string& label) {
  if (label.empty()) throw EmptyFieldError("label");
  if (instance.text.empty()) throw EmptyFieldError("text");
  RenderedTemplate r;
  switch (instance.task) {
    case ClassificationTask::tnews: {
      r.text = "这是关于" + label + "的文章：";
      r.completion_offset = r.text.size();
      r.text += instance.text;
      return r;
    }
    case ClassificationTask::iflytek: {
      r.text = "这是关于" + label + "的应用程序：";
      r.completion_offset = r.text.size();
      r.text += instance.text;
      return r;
    }
    case ClassificationTask::ocnli: {
      if (instance.text2.empty()) throw EmptyFieldError("text2");
      std::string connective;
      if (label == "entailment") connective = "对";
      else if (label == "contradiction") connective = "错";
      else if (label == "neutral") connective = "也许";
      else throw FormatError("unknown OCNLI label: " + label);
      r.text = instance.text + "？" + connective + "，";
      r.completion_offset = r.text.size();
      r.text += instance.text2;
      return r;
    }
  }
  throw FormatError("unknown task kind");
}

std::string classify_by_ppl(const TemplateScorer& scorer,
                            const ClassificationInstance& instance,
                            const std::vector<std::string>& candidates) {
  if (candidates.size() < 2)
    throw ConfigError("classification needs at least 2 candidates");
  std::size_t best = 0;
  double best_ppl = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const RenderedTemplate r = render_template(instance, candidates[i]);
    const double ppl = scorer(r.text, r.completion_offset);
    if (i == 0 || ppl < best_ppl) {
      best = i;
      best_ppl = ppl;
    }
  }
  return candidates[best];
}

double subsample_eval(const std::vector<ClassificationInstance>& instances,
                      const TemplateScorer& scorer, std::size_t k_false,
                      std::size_t repeats, std::uint64_t seed,
                      EvalReport* report) {
  if (instances.empty()) throw EmptyCorpusError("no instances");
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  double total_accuracy = 0.0;
  for (std::size_t r = 0; r < repeats; ++r) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const ClassificationInstance& instance = instances[i];
      std::vector<std::string> false_labels;
      for (const auto& c : instance.candidates) {
        if (c != instance.gold_label) false_labels.push_back(c);
      }
      if (false_labels.size() < k_false)
        throw ConfigError("instance " + std::to_string(i) + " has only " +
                          std::to_string(false_labels.size()) +
                          " false labels");
      Rng rng(derive_seed(seed, r, i));
      rng.shuffle(false_labels);
      std::vector<std::string> candidates(false_labels.begin(),
                                          false_labels.begin() + k_false);
      const std::size_t gold_pos = rng.next_below(k_false + 1);
      candidates.insert(candidates.begin() + gold_pos, instance.gold_label);
      const std::string pred = classify_by_ppl(scorer, instance, candidates);
      const bool ok = pred == instance.gold_label;
      correct += ok ? 1 : 0;
      if (report) {
        const RenderedTemplate rt = render_template(instance, pred);
        report->rows.push_back({std::to_string(r), std::to_string(i), rt.text,
                                pred, instance.gold_label, ok ? "1" : "0"});
      }
    }
    total_accuracy +=
        static_cast<double>(correct) / static_cast<double>(instances.size());
  }
  return total_accuracy / static_cast<double>(repeats);
}

double accuracy(const std::vector<std::string>& preds,
                const std::vector<std::string>& golds) {
  if (preds.size() != golds.size() || preds.empty())
    throw ShapeError("prediction/gold length mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == golds[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

// ---------------------------------------------------------------------------
// ChID

std::string chid_isolate(const std::string& passage, std::size_t target_blank) {
  std::string out;
  std::size_t pos = 0;
  std::size_t blank = 0;
  bool found = false;
  const std::string marker = kChidBlankMarker;
  while (true) {
    const std::size_t hit = passage.find(marker, pos);
    if (hit == std::string::npos) {
      out += passage.substr(pos);
      break;
    }
    out += passage.substr(pos, hit - pos);
    if (blank == target_blank) {
      out += marker;
      found = true;
    }
    ++blank;
    pos = hit + marker.size();
  }
  if (!found)
    throw FormatError("passage has no blank #" + std::to_string(target_blank));
  return out;
}

std::vector<std::size_t> chid_unsupervised(const PplScorer& scorer,
                                           const ChidInstance& instance) {
  std::vector<std::size_t> preds;
  preds.reserve(instance.blanks.size());
  for (std::size_t b = 0; b < instance.blanks.size(); ++b) {
    const std::string isolated = chid_isolate(instance.passage, b);
    const std::size_t marker_at = isolated.find(kChidBlankMarker);
    const ChidBlank& blank = instance.blanks[b];
    if (blank.candidates.size() != 10)
      throw FormatError("blank must offer exactly 10 candidates");
    std::size_t best = 0;
    double best_ppl = 0.0;
    for (std::size_t c = 0; c < blank.candidates.size(); ++c) {
      std::string filled = isolated;
      filled.replace(marker_at, std::string(kChidBlankMarker).size(),
                     blank.candidates[c]);
      const double ppl = scorer(filled);
      if (c == 0 || ppl < best_ppl) {
        best = c;
        best_ppl = ppl;
      }
    }
    preds.push_back(best);
  }
  return preds;
}

std::string chid_supervised_prompt(const std::string& passage,
                                   const std::vector<std::string>& candidates) {
  if (candidates.size() != 10)
    throw FormatError("supervised template needs exactly 10 candidates, got " +
                      std::to_string(candidates.size()));
  std::string out;
  for (std::size_t i = 0; i < 10; ++i) {
    out += "选项" + std::to_string(i + 1) + ":" + candidates[i] + " ";
  }
  out += passage + " 答案是:";
  return out;
}

std::string chid_supervised_target(const ChidBlank& blank, ChidTarget mode) {
  if (blank.gold >= blank.candidates.size())
    throw FormatError("gold index out of range");
  if (mode == ChidTarget::option_number)
    return std::to_string(blank.gold + 1);
  return blank.candidates[blank.gold];
}

// ---------------------------------------------------------------------------
// Prompts

std::string dialogue_prompt(const std::vector<DialoguePair>& exemplars,
                            const std::string& post) {
  if (exemplars.size() != 4)
    throw FormatError("dialogue prompt needs exactly 4 exemplar pairs, got " +
                      std::to_string(exemplars.size()));
  std::string out;
  for (const DialoguePair& pair : exemplars) {
    out += "Context: " + pair.post + " Response: " + pair.response + " ";
  }
  out += "Context: " + post + " Response:";
  return out;
}

std::string qa_prompt(const std::string& passage, const std::string& question,
                      const std::optional<QAInstance>& exemplar) {
  if (passage.empty()) throw EmptyFieldError("passage");
  if (question.empty()) throw EmptyFieldError("question");
  std::string out;
  if (exemplar) {
    if (exemplar->passage.empty() || exemplar->question.empty() ||
        exemplar->golds.empty())
      throw EmptyFieldError("exemplar");
    out += exemplar->passage + "\n问：" + exemplar->question +
           "\n答：" + exemplar->golds.front() + "\n\n";
  }
  out += passage + "\n问：" + question + "\n答：";
  return out;
}

std::string entity_prompt(const std::vector<EntityTriple>& triples,
                          const std::string& query_head,
                          const std::string& query_relation) {
  std::string out;
  for (const EntityTriple& t : triples) {
    if (t.relation != query_relation)
      throw MismatchError("exemplar relation '" + t.relation +
                          "' differs from query relation '" + query_relation +
                          "'");
    out += t.head + " " + t.relation + " " + t.tail + "\n";
  }
  out += query_head + " " + query_relation + " ";
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

double qa_f1(const std::string& pred, const std::vector<std::string>& golds) {
  if (golds.empty()) throw EmptyFieldError("gold answers");
  const auto pred_chars = normalize_chars(pred);
  const auto pred_bag = char_bag(pred_chars);
  double best = 0.0;
  for (const std::string& gold : golds) {
    const auto gold_chars = normalize_chars(gold);
    if (pred_chars.empty() && gold_chars.empty()) {
      best = 1.0;
      continue;
    }
    if (pred_chars.empty() || gold_chars.empty()) continue;
    const auto gold_bag = char_bag(gold_chars);
    std::size_t overlap = 0;
    for (const auto& [c, n] : pred_bag) {
      auto it = gold_bag.find(c);
      if (it != gold_bag.end()) overlap += std::min(n, it->second);
    }
    if (overlap == 0) continue;
    const double p =
        static_cast<double>(overlap) / static_cast<double>(pred_chars.size());
    const double r =
        static_cast<double>(overlap) / static_cast<double>(gold_chars.size());
    best = std::max(best, 2.0 * p * r / (p + r));
  }
  return best;
}

double qa_em(const std::string& pred, const std::vector<std::string>& golds) {
  if (golds.empty()) throw EmptyFieldError("gold answers");
  const auto pred_chars = normalize_chars(pred);
  for (const std::string& gold : golds) {
    if (pred_chars == normalize_chars(gold)) return 1.0;
  }
  return 0.0;
}

double bleu1(const std::string& pred, const std::vector<std::string>& refs) {
  if (refs.empty()) throw EmptyFieldError("references");
  const auto pred_chars = codepoints(pred);
  if (pred_chars.empty()) return 0.0;
  const auto pred_bag = char_bag(pred_chars);

  // Clipped counts against the per-character maximum over references.
  std::map<char32_t, std::size_t> max_ref;
  std::size_t closest_len = 0;
  std::size_t best_gap = SIZE_MAX;
  for (const std::string& ref : refs) {
    const auto ref_chars = codepoints(ref);
    for (const auto& [c, n] : char_bag(ref_chars)) {
      max_ref[c] = std::max(max_ref[c], n);
    }
    const std::size_t gap = ref_chars.size() > pred_chars.size()
                                ? ref_chars.size() - pred_chars.size()
                                : pred_chars.size() - ref_chars.size();
    if (gap < best_gap || (gap == best_gap && ref_chars.size() < closest_len)) {
      best_gap = gap;
      closest_len = ref_chars.size();
    }
  }
  std::size_t clipped = 0;
  for (const auto& [c, n] : pred_bag) {
    auto it = max_ref.find(c);
    if (it != max_ref.end()) clipped += std::min(n, it->second);
  }
  const double precision =
      static_cast<double>(clipped) / static_cast<double>(pred_chars.size());
  const double bp = std::exp(std::min(
      0.0, 1.0 - static_cast<double>(closest_len) /
                     static_cast<double>(pred_chars.size())));
  return precision * bp;
}

std::vector<std::string> tokenize_mixed(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t start = pos;
    const char32_t cp = utf8::decode_at_lenient(text, pos);
    if (is_space_cp(cp)) {
      flush();
    } else if (cp >= 0x2E80) {  // CJK block and above: one char, one token
      flush();
      tokens.push_back(text.substr(start, pos - start));
    } else {
      current += text.substr(start, pos - start);
    }
  }
  flush();
  return tokens;
}

std::pair<std::size_t, double> distinct_n(
    const std::vector<std::string>& responses, std::size_t n) {
  if (n < 1) throw ConfigError("n must be >= 1");
  std::set<std::string> distinct;
  std::size_t total = 0;
  for (const std::string& response : responses) {
    const auto tokens = tokenize_mixed(response);
    if (tokens.size() < n) continue;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string gram;
      for (std::size_t j = 0; j < n; ++j) {
        if (j) gram.push_back('\x1f');
        gram += tokens[i + j];
      }
      distinct.insert(gram);
      ++total;
    }
  }
  if (total == 0) return {0, 0.0};
  return {distinct.size(),
          static_cast<double>(distinct.size()) / static_cast<double>(total)};
}

namespace {

std::vector<const std::vector<double>*> embedded_tokens(
    const std::string& text, const WordEmbeddings& emb) {
  std::vector<const std::vector<double>*> vecs;
  for (const std::string& token : tokenize_mixed(text)) {
    if (const auto* v = emb.find(token)) vecs.push_back(v);
  }
  return vecs;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double emb_average(const std::string& response, const std::string& reference,
                   const WordEmbeddings& emb) {
  const auto rv = embedded_tokens(response, emb);
  const auto fv = embedded_tokens(reference, emb);
  if (rv.empty() || fv.empty()) return 0.0;
  std::vector<double> mr(emb.dim(), 0.0), mf(emb.dim(), 0.0);
  for (const auto* v : rv) {
    for (std::size_t i = 0; i < mr.size(); ++i) mr[i] += (*v)[i];
  }
  for (const auto* v : fv) {
    for (std::size_t i = 0; i < mf.size(); ++i) mf[i] += (*v)[i];
  }
  for (auto& x : mr) x /= static_cast<double>(rv.size());
  for (auto& x : mf) x /= static_cast<double>(fv.size());
  return cosine(mr, mf);
}

double vector_extrema(const std::string& response, const std::string& reference,
                      const WordEmbeddings& emb) {
  const auto rv = embedded_tokens(response, emb);
  const auto fv = embedded_tokens(reference, emb);
  if (rv.empty() || fv.empty()) return 0.0;
  auto extrema = [&](const std::vector<const std::vector<double>*>& vecs) {
    std::vector<double> out(emb.dim(), 0.0);
    for (std::size_t d = 0; d < out.size(); ++d) {
      double best = 0.0;
      for (const auto* v : vecs) {
        const double x = (*v)[d];
        // Largest magnitude wins; a positive value takes a magnitude tie.
        if (std::abs(x) > std::abs(best) ||
            (std::abs(x) == std::abs(best) && x > best)) {
          best = x;
        }
      }
      out[d] = best;
    }
    return out;
  };
  return cosine(extrema(rv), extrema(fv));
}

double greedy_matching(const std::string& response, const std::string& reference,
                       const WordEmbeddings& emb) {
  const auto rv = embedded_tokens(response, emb);
  const auto fv = embedded_tokens(reference, emb);
  if (rv.empty() || fv.empty()) return 0.0;
  auto directed = [](const std::vector<const std::vector<double>*>& from,
                     const std::vector<const std::vector<double>*>& to) {
    double total = 0.0;
    for (const auto* a : from) {
      double best = -1.0;
      for (const auto* b : to) best = std::max(best, cosine(*a, *b));
      total += best;
    }
    return total / static_cast<double>(from.size());
  };
  return 0.5 * (directed(rv, fv) + directed(fv, rv));
}

// ---------------------------------------------------------------------------
// TSV loading

namespace {

struct TsvFile {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    throw FormatError("missing column: " + name);
  }
};

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t pos = 0;
  while (true) {
    const std::size_t tab = line.find('\t', pos);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(pos));
      break;
    }
    fields.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
  return fields;
}

TsvFile load_tsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open data file: " + path);
  TsvFile tsv;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!utf8::is_valid(line)) throw Utf8Error("data file " + path);
    auto fields = split_tabs(line);
    if (first) {
      tsv.columns = std::move(fields);
      first = false;
    } else {
      if (fields.size() != tsv.columns.size())
        throw FormatError("row with " + std::to_string(fields.size()) +
                          " fields, header has " +
                          std::to_string(tsv.columns.size()));
      tsv.rows.push_back(std::move(fields));
    }
  }
  if (first) throw FormatError("data file has no header: " + path);
  return tsv;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (true) {
    const std::size_t hit = s.find(sep, pos);
    if (hit == std::string::npos) {
      parts.push_back(s.substr(pos));
      break;
    }
    parts.push_back(s.substr(pos, hit - pos));
    pos = hit + 1;
  }
  return parts;
}

std::size_t count_markers(const std::string& passage) {
  std::size_t n = 0;
  std::size_t pos = 0;
  const std::string marker = kChidBlankMarker;
  while ((pos = passage.find(marker, pos)) != std::string::npos) {
    ++n;
    pos += marker.size();
  }
  return n;
}

const std::set<std::string> kYesNoAnswers = {
    "是",  "否",  "不是", "对",  "不对", "能",  "不能",
    "yes", "no",  "Yes",  "No",  "YES",  "NO"};

}  // namespace

std::vector<ClassificationInstance> load_classification(
    const std::string& path, ClassificationTask task) {
  const TsvFile tsv = load_tsv(path);
  const std::size_t label_col = tsv.column("label");
  const std::size_t text_col = tsv.column("text");
  const bool has_text2 =
      std::find(tsv.columns.begin(), tsv.columns.end(), "text2") !=
      tsv.columns.end();
  if (task == ClassificationTask::ocnli && !has_text2)
    throw FormatError("OCNLI data needs a text2 column");
  const std::size_t text2_col = has_text2 ? tsv.column("text2") : 0;

  std::vector<std::string> labels;
  for (const auto& row : tsv.rows) {
    const std::string& label = row[label_col];
    if (label == "-") continue;
    if (std::find(labels.begin(), labels.end(), label) == labels.end())
      labels.push_back(label);
  }

  std::vector<ClassificationInstance> instances;
  for (const auto& row : tsv.rows) {
    if (row[label_col] == "-") continue;  // unresolved OCNLI annotations
    ClassificationInstance inst;
    inst.task = task;
    inst.text = row[text_col];
    if (has_text2) inst.text2 = row[text2_col];
    inst.gold_label = row[label_col];
    inst.candidates = labels;
    instances.push_back(std::move(inst));
  }
  return instances;
}

std::vector<ChidInstance> load_chid(const std::string& path) {
  const TsvFile tsv = load_tsv(path);
  const std::size_t passage_col = tsv.column("passage");
  const std::size_t cand_col = tsv.column("candidates");
  const std::size_t gold_col = tsv.column("gold");
  std::vector<ChidInstance> instances;
  for (const auto& row : tsv.rows) {
    ChidInstance inst;
    inst.passage = row[passage_col];
    const auto blank_groups = split_on(row[cand_col], '|');
    const auto golds = split_on(row[gold_col], ',');
    if (blank_groups.size() != golds.size())
      throw FormatError("candidate groups and gold indices disagree");
    if (count_markers(inst.passage) != blank_groups.size())
      throw FormatError("passage markers and candidate groups disagree");
    for (std::size_t b = 0; b < blank_groups.size(); ++b) {
      ChidBlank blank;
      blank.candidates = split_on(blank_groups[b], ',');
      if (blank.candidates.size() != 10)
        throw FormatError("each blank needs exactly 10 candidates");
      blank.gold = std::stoul(golds[b]);
      if (blank.gold >= 10) throw FormatError("gold index out of range");
      inst.blanks.push_back(std::move(blank));
    }
    if (inst.blanks.empty()) throw FormatError("passage without blanks");
    instances.push_back(std::move(inst));
  }
  return instances;
}

std::vector<QAInstance> load_qa(const std::string& path) {
  const TsvFile tsv = load_tsv(path);
  const std::size_t passage_col = tsv.column("passage");
  const std::size_t question_col = tsv.column("question");
  const std::size_t answers_col = tsv.column("answers");
  std::vector<QAInstance> instances;
  for (const auto& row : tsv.rows) {
    QAInstance inst;
    inst.passage = row[passage_col];
    inst.question = row[question_col];
    inst.golds = split_on(row[answers_col], '|');
    if (inst.passage.empty() || inst.question.empty() || inst.golds.empty() ||
        inst.golds.front().empty())
      throw FormatError("QA row with empty fields");
    const bool yes_no =
        std::all_of(inst.golds.begin(), inst.golds.end(),
                    [](const std::string& g) {
                      return kYesNoAnswers.contains(g);
                    });
    if (yes_no) continue;  // extractive protocol only
    instances.push_back(std::move(inst));
  }
  return instances;
}

std::vector<DialoguePair> load_dialogue(const std::string& path) {
  const TsvFile tsv = load_tsv(path);
  const std::size_t post_col = tsv.column("post");
  const std::size_t response_col = tsv.column("response");
  std::vector<DialoguePair> pairs;
  for (const auto& row : tsv.rows) {
    if (row[post_col].empty() || row[response_col].empty())
      throw FormatError("dialogue row with empty fields");
    pairs.push_back({row[post_col], row[response_col]});
  }
  return pairs;
}

std::vector<EntityTriple> load_entity(const std::string& path) {
  const TsvFile tsv = load_tsv(path);
  const std::size_t head_col = tsv.column("head");
  const std::size_t relation_col = tsv.column("relation");
  const std::size_t tail_col = tsv.column("tail");
  std::vector<EntityTriple> triples;
  for (const auto& row : tsv.rows) {
    if (row[head_col].empty() || row[relation_col].empty() ||
        row[tail_col].empty())
      throw FormatError("entity row with empty fields");
    triples.push_back({row[head_col], row[relation_col], row[tail_col]});
  }
  return triples;
}

// ---------------------------------------------------------------------------
// Runners

EvalReport run_classification(
    const std::vector<ClassificationInstance>& instances,
    const TemplateScorer& scorer, ClassificationTask task, std::uint64_t seed) {
  if (instances.empty()) throw EmptyCorpusError("no instances");
  EvalReport report;
  if (task == ClassificationTask::ocnli) {
    report.columns = {"index", "prompt", "prediction", "gold", "correct"};
    std::vector<std::string> preds, golds;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto& inst = instances[i];
      const std::string pred =
          classify_by_ppl(scorer, inst, inst.candidates);
      preds.push_back(pred);
      golds.push_back(inst.gold_label);
      const RenderedTemplate rt = render_template(inst, pred);
      report.rows.push_back({std::to_string(i), rt.text, pred, inst.gold_label,
                             pred == inst.gold_label ? "1" : "0"});
    }
    report.add_metric("accuracy", accuracy(preds, golds));
  } else {
    report.columns = {"repeat", "index", "prompt", "prediction", "gold",
                      "correct"};
    const double acc = subsample_eval(instances, scorer, 3, 3, seed, &report);
    report.add_metric("accuracy", acc);
  }
  return report;
}

EvalReport run_chid_unsupervised(const std::vector<ChidInstance>& instances,
                                 const PplScorer& scorer) {
  if (instances.empty()) throw EmptyCorpusError("no instances");
  EvalReport report;
  report.columns = {"index", "blank", "prediction", "gold", "idiom", "correct"};
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto preds = chid_unsupervised(scorer, instances[i]);
    for (std::size_t b = 0; b < preds.size(); ++b) {
      const ChidBlank& blank = instances[i].blanks[b];
      const bool ok = preds[b] == blank.gold;
      correct += ok ? 1 : 0;
      ++total;
      report.rows.push_back({std::to_string(i), std::to_string(b),
                             std::to_string(preds[b]),
                             std::to_string(blank.gold),
                             blank.candidates[preds[b]], ok ? "1" : "0"});
    }
  }
  report.add_metric("accuracy",
                    static_cast<double>(correct) / static_cast<double>(total));
  return report;
}

EvalReport run_qa(const std::vector<QAInstance>& instances,
                  const Generator& generator, bool one_shot,
                  std::uint64_t seed) {
  if (instances.empty()) throw EmptyCorpusError("no instances");
  if (one_shot && instances.size() < 2)
    throw ConfigError("one-shot evaluation needs at least 2 instances");
  EvalReport report;
  report.columns = {"index", "prompt", "prediction", "gold", "f1", "em"};
  double f1_total = 0.0, em_total = 0.0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const QAInstance& inst = instances[i];
    std::optional<QAInstance> exemplar;
    if (one_shot) {
      Rng rng(derive_seed(seed, i));
      std::size_t j = rng.next_below(instances.size() - 1);
      if (j >= i) ++j;
      exemplar = instances[j];
    }
    const std::string prompt = qa_prompt(inst.passage, inst.question, exemplar);
    const std::string pred = first_line(generator(prompt));
    const double f1 = qa_f1(pred, inst.golds);
    const double em = qa_em(pred, inst.golds);
    f1_total += f1;
    em_total += em;
    std::string gold_joined;
    for (std::size_t g = 0; g < inst.golds.size(); ++g) {
      if (g) gold_joined += "|";
      gold_joined += inst.golds[g];
    }
    report.rows.push_back({std::to_string(i), prompt, pred, gold_joined,
                           format_double(f1), format_double(em)});
  }
  const double n = static_cast<double>(instances.size());
  report.add_metric("f1", f1_total / n);
  report.add_metric("em", em_total / n);
  return report;
}

EvalReport run_dialogue(const std::vector<DialoguePair>& pairs,
                        const Generator& generator,
                        const WordEmbeddings* embeddings, std::uint64_t seed) {
  if (pairs.size() < 5)
    throw ConfigError("dialogue evaluation needs >= 5 pairs (4 exemplars)");
  Rng rng(seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<DialoguePair> exemplars;
  std::set<std::size_t> exemplar_idx;
  for (std::size_t i = 0; i < 4; ++i) {
    exemplars.push_back(pairs[order[i]]);
    exemplar_idx.insert(order[i]);
  }

  EvalReport report;
  report.columns = {"index", "post", "response", "reference",
                    "average", "extrema", "greedy"};
  std::vector<std::string> responses;
  double avg_total = 0.0, ext_total = 0.0, greedy_total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (exemplar_idx.contains(i)) continue;
    const std::string prompt = dialogue_prompt(exemplars, pairs[i].post);
    const std::string response = first_line(generator(prompt));
    responses.push_back(response);
    double a = 0.0, e = 0.0, g = 0.0;
    if (embeddings) {
      a = emb_average(response, pairs[i].response, *embeddings);
      e = vector_extrema(response, pairs[i].response, *embeddings);
      g = greedy_matching(response, pairs[i].response, *embeddings);
      avg_total += a;
      ext_total += e;
      greedy_total += g;
    }
    ++n;
    report.rows.push_back({std::to_string(i), pairs[i].post, response,
                           pairs[i].response, format_double(a),
                           format_double(e), format_double(g)});
  }
  if (embeddings && n > 0) {
    report.add_metric("average", avg_total / static_cast<double>(n));
    report.add_metric("extrema", ext_total / static_cast<double>(n));
    report.add_metric("greedy", greedy_total / static_cast<double>(n));
  }
  const auto [d1, r1] = distinct_n(responses, 1);
  const auto [d2, r2] = distinct_n(responses, 2);
  report.add_metric("distinct_1_count", static_cast<double>(d1));
  report.add_metric("distinct_1_ratio", r1);
  report.add_metric("distinct_2_count", static_cast<double>(d2));
  report.add_metric("distinct_2_ratio", r2);
  return report;
}

EvalReport run_entity(const std::vector<EntityTriple>& triples,
                      const Generator& generator, std::size_t n_exemplars,
                      std::uint64_t seed) {
  if (triples.empty()) throw EmptyCorpusError("no triples");
  std::vector<std::string> relations;
  std::map<std::string, std::vector<std::size_t>> by_relation;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    auto& bucket = by_relation[triples[i].relation];
    if (bucket.empty()) relations.push_back(triples[i].relation);
    bucket.push_back(i);
  }

  EvalReport report;
  report.columns = {"relation", "head", "prediction", "gold", "bleu1"};
  double bleu_total = 0.0;
  std::size_t n = 0;
  for (const std::string& relation : relations) {
    const auto& bucket = by_relation[relation];
    if (bucket.size() < n_exemplars + 1) continue;  // not enough exemplars
    double rel_total = 0.0;
    std::size_t rel_n = 0;
    for (std::size_t qi = 0; qi < bucket.size(); ++qi) {
      const EntityTriple& query = triples[bucket[qi]];
      std::vector<std::size_t> others;
      for (std::size_t oi = 0; oi < bucket.size(); ++oi) {
        if (oi != qi) others.push_back(bucket[oi]);
      }
      Rng rng(derive_seed(seed, bucket[qi]));
      rng.shuffle(others);
      std::vector<EntityTriple> exemplars;
      for (std::size_t e = 0; e < n_exemplars; ++e)
        exemplars.push_back(triples[others[e]]);
      const std::string prompt =
          entity_prompt(exemplars, query.head, query.relation);
      const std::string pred = first_line(generator(prompt));
      const double score = bleu1(pred, {query.tail});
      bleu_total += score;
      rel_total += score;
      ++n;
      ++rel_n;
      report.rows.push_back(
          {relation, query.head, pred, query.tail, format_double(score)});
    }
    if (rel_n > 0)
      report.add_metric("bleu1." + relation,
                        rel_total / static_cast<double>(rel_n));
  }
  if (n == 0) throw ConfigError("no relation has enough triples");
  report.add_metric("bleu1", bleu_total / static_cast<double>(n));
  return report;
}

}  // namespace cpmf
