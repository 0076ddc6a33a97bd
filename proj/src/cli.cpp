#include "cpmf/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "cpmf/checkpoint.hpp"
#include "cpmf/config.hpp"
#include "cpmf/corpus.hpp"
#include "cpmf/digest.hpp"
#include "cpmf/errors.hpp"
#include "cpmf/eval.hpp"
#include "cpmf/generation.hpp"
#include "cpmf/kernels.hpp"
#include "cpmf/model.hpp"
#include "cpmf/parallel.hpp"
#include "cpmf/rng.hpp"
#include "cpmf/tokenizer.hpp"
#include "cpmf/training.hpp"

namespace cpmf {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading file: " + path);
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out << content;
  if (!out) throw IoError("failed writing file: " + path);
}

// Every run that produces files writes <primary>.manifest.json beside them:
// the effective config plus input digests pin the run down exactly.
void write_manifest(const std::string& primary_output,
                    const std::string& command,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    std::uint64_t seed, const RunConfig* config,
                    const nlohmann::json& extra = {}) {
  nlohmann::json m;
  m["command"] = command;
  m["seed"] = seed;
  m["kernel_backend"] =
      std::string(kernels::backend_name(kernels::active_backend()));
  nlohmann::json in_digests = nlohmann::json::object();
  for (const auto& path : inputs) in_digests[path] = digest_hex(fnv1a_file(path));
  m["inputs"] = in_digests;
  nlohmann::json out_digests = nlohmann::json::object();
  for (const auto& path : outputs)
    out_digests[path] = digest_hex(fnv1a_file(path));
  m["outputs"] = out_digests;
  if (config) m["config"] = config->to_text();
  if (!extra.empty()) m["extra"] = extra;
  write_file(primary_output + ".manifest.json", m.dump(2) + "\n");
}

struct ModelArgs {
  std::string checkpoint;
  std::string config;
  std::string vocab;
  std::string lexicon;
  std::uint64_t seed = 0;
};

void add_model_options(CLI::App* cmd, ModelArgs& args) {
  cmd->add_option("--model", args.checkpoint, "checkpoint file")->required();
  cmd->add_option("--config", args.config, "config file")->required();
  cmd->add_option("--vocab", args.vocab, "vocab file")->required();
  cmd->add_option("--lexicon", args.lexicon, "lexicon file")->required();
  cmd->add_option("--seed", args.seed, "random seed");
}

struct ModelBundle {
  RunConfig run;
  Lexicon lexicon;
  PieceVocab vocab;
  Parameters params;
};

ModelBundle load_bundle(const ModelArgs& args) {
  ModelBundle b;
  b.run = RunConfig::load(args.config);
  b.lexicon = Lexicon::load(args.lexicon);
  b.vocab = PieceVocab::load(args.vocab);
  if (b.run.model.vocab_size == 0) b.run.model.vocab_size = b.vocab.size();
  if (b.vocab.size() > b.run.model.vocab_size)
    throw ConfigError("vocab file holds " + std::to_string(b.vocab.size()) +
                      " pieces but vocab_size is " +
                      std::to_string(b.run.model.vocab_size));
  b.run.model.validate();
  b.params = load_checkpoint(args.checkpoint, b.run.model);
  return b;
}

enum class SpanMode { full, completion };

TemplateScorer make_template_scorer(const ModelBundle& b, SpanMode mode) {
  return [&b, mode](const std::string& text, std::size_t completion_offset) {
    std::vector<TokenId> ids = encode(text, b.lexicon, b.vocab);
    std::size_t span_begin = 1;
    if (mode == SpanMode::completion && completion_offset > 0 &&
        completion_offset < text.size()) {
      const auto prefix =
          encode(text.substr(0, completion_offset), b.lexicon, b.vocab);
      span_begin = prefix.size();
    }
    const std::size_t limit = b.params.config.max_seq_len;
    if (ids.size() > limit) {
      const std::size_t dropped = ids.size() - limit;
      ids.erase(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(dropped));
      span_begin = span_begin > dropped ? span_begin - dropped : 1;
    }
    if (ids.size() < 2) return 1e300;  // no scorable position
    span_begin = std::min(std::max<std::size_t>(span_begin, 1), ids.size() - 1);
    return perplexity(b.params, ids, ScoreSpan{span_begin, ids.size()});
  };
}

PplScorer make_ppl_scorer(const ModelBundle& b) {
  TemplateScorer scorer = make_template_scorer(b, SpanMode::full);
  return [scorer](const std::string& text) { return scorer(text, 0); };
}

Generator make_generator(const ModelBundle& b, std::uint64_t seed) {
  auto counter = std::make_shared<std::uint64_t>(0);
  return [&b, seed, counter](const std::string& prompt) {
    std::vector<TokenId> ids = encode(prompt, b.lexicon, b.vocab);
    const std::size_t limit = b.params.config.max_seq_len;
    if (ids.size() > limit) {
      ids.erase(ids.begin(),
                ids.begin() + static_cast<std::ptrdiff_t>(ids.size() - limit));
    }
    if (ids.empty()) ids.push_back(PieceVocab::kEodId);
    SamplerConfig sc = b.run.sampler;
    sc.stop_ids.insert(PieceVocab::kEodId);
    sc.seed = derive_seed(seed, (*counter)++);
    std::vector<TokenId> out = generate(b.params, ids, sc);
    while (!out.empty() && sc.stop_ids.contains(out.back())) out.pop_back();
    return decode(out, b.vocab);
  };
}

void print_metrics(const EvalReport& report) {
  for (const auto& [name, value] : report.metrics) {
    std::cout << name << " = " << value << "\n";
  }
}

nlohmann::json metrics_json(const EvalReport& report) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, value] : report.metrics) j[name] = value;
  return j;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_build_vocab(const std::string& corpus_path,
                    const std::string& lexicon_path, const std::string& out,
                    std::size_t target_size, std::size_t seed_size,
                    double prune_keep, std::size_t em_iters) {
  const Lexicon lexicon = Lexicon::load(lexicon_path);
  const DocumentSet docs = load_documents(corpus_path);
  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const std::string& doc : docs.documents) {
    for (std::string& word : pre_segment(doc, lexicon)) {
      auto [it, inserted] = counts.emplace(std::move(word), 0);
      if (inserted) order.push_back(it->first);
      ++it->second;
    }
  }
  std::vector<std::pair<std::string, std::size_t>> counted;
  counted.reserve(order.size());
  for (const std::string& w : order) counted.emplace_back(w, counts[w]);

  UnigramTrainDiagnostics diag;
  const PieceVocab vocab = train_unigram_counted(counted, target_size, seed_size,
                                                 prune_keep, &diag, em_iters);
  vocab.save(out);
  std::cout << "pieces: " << vocab.size() << " (" << vocab.content_size()
            << " learned), prune rounds: " << diag.prune_rounds << "\n";
  write_manifest(out, "build-vocab", {corpus_path, lexicon_path}, {out}, 0,
                 nullptr,
                 {{"target_size", target_size},
                  {"seed_size", seed_size},
                  {"prune_keep", prune_keep}});
  return 0;
}

int cmd_encode(const std::string& vocab_path, const std::string& lexicon_path,
               const std::string& in, const std::string& out) {
  const PieceVocab vocab = PieceVocab::load(vocab_path);
  const Lexicon lexicon = Lexicon::load(lexicon_path);
  const std::string text = read_file(in);
  const std::vector<TokenId> ids = encode(text, lexicon, vocab);
  std::ostringstream body;
  for (TokenId id : ids) body << id << '\n';
  write_file(out, body.str());
  write_manifest(out, "encode", {vocab_path, lexicon_path, in}, {out}, 0,
                 nullptr);
  return 0;
}

int cmd_decode(const std::string& vocab_path, const std::string& in,
               const std::string& out) {
  const PieceVocab vocab = PieceVocab::load(vocab_path);
  std::istringstream ids_in(read_file(in));
  std::vector<TokenId> ids;
  long long id = 0;
  while (ids_in >> id) ids.push_back(static_cast<TokenId>(id));
  if (!ids_in.eof()) throw FormatError("non-numeric token id in " + in);
  write_file(out, decode(ids, vocab));
  write_manifest(out, "decode", {vocab_path, in}, {out}, 0, nullptr);
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& corpus_path,
              const std::string& vocab_path, const std::string& lexicon_path,
              const std::string& out, std::uint64_t seed,
              std::size_t steps_override, std::size_t batch_override,
              std::size_t seq_len_override) {
  RunConfig run =
      config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
  if (steps_override > 0) run.train.total_steps = steps_override;
  if (batch_override > 0) run.train.batch_size = batch_override;
  if (seq_len_override > 0) run.seq_len = seq_len_override;
  run.train.seed = seed;
  if (run.train.warmup_steps > run.train.total_steps)
    run.train.warmup_steps = run.train.total_steps / 4;

  const Lexicon lexicon = Lexicon::load(lexicon_path);
  const PieceVocab vocab = PieceVocab::load(vocab_path);
  if (run.model.vocab_size == 0) run.model.vocab_size = vocab.size();
  if (vocab.size() > run.model.vocab_size)
    throw ConfigError("vocab is larger than vocab_size");
  if (run.seq_len > run.model.max_seq_len)
    throw ConfigError("seq_len exceeds max_seq_len");
  run.model.validate();
  run.train.validate();

  const DocumentSet docs = load_documents(corpus_path);
  const TokenStream stream = concat_with_eod(docs, lexicon, vocab);
  const auto sequences = chunk(stream, run.seq_len);
  if (sequences.empty())
    throw EmptyCorpusError("corpus yields no full training sequence");

  const TrainResult result = train(sequences, run.model, run.train);
  save_checkpoint(out, result.params);

  std::ostringstream csv;
  csv << "step,loss,lr\n";
  for (const StepRecord& r : result.loss_series) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g\n", r.step, r.loss, r.lr);
    csv << buf;
  }
  const std::string loss_path = out + ".loss.csv";
  write_file(loss_path, csv.str());

  std::cout << "trained " << result.loss_series.size() << " steps, final loss "
            << (result.loss_series.empty() ? 0.0
                                           : result.loss_series.back().loss)
            << "\n";
  write_manifest(out, "train", {corpus_path, vocab_path, lexicon_path},
                 {out, loss_path}, seed, &run);
  return 0;
}

int cmd_generate(const ModelArgs& args, const std::string& prompt_file,
                 double p, double temperature, std::size_t max_new_tokens,
                 const std::string& out) {
  ModelBundle b = load_bundle(args);
  if (p > 0.0) b.run.sampler.p = p;
  if (temperature > 0.0) b.run.sampler.temperature = temperature;
  if (max_new_tokens > 0) b.run.sampler.max_new_tokens = max_new_tokens;
  b.run.sampler.validate();
  const Generator gen = make_generator(b, args.seed);
  const std::string text = gen(read_file(prompt_file));
  std::cout << text << "\n";
  if (!out.empty()) {
    write_file(out, text);
    write_manifest(out, "generate",
                   {args.checkpoint, args.config, args.vocab, args.lexicon,
                    prompt_file},
                   {out}, args.seed, &b.run);
  }
  return 0;
}

int cmd_shard_check(const ModelArgs& args, std::size_t shards,
                    std::size_t seq_len, double tolerance,
                    const std::string& comm_csv) {
  ModelBundle b = load_bundle(args);
  const ModelConfig& cfg = b.run.model;
  seq_len = std::min(seq_len, cfg.max_seq_len);
  Rng rng(args.seed);
  std::vector<TokenId> ids(seq_len);
  for (auto& id : ids)
    id = static_cast<TokenId>(rng.next_below(cfg.vocab_size));

  const Tensor dense = forward(b.params, ids);
  const ShardedParams sharded = shard_params(b.params, shards);
  CommLog log;
  const Tensor split = sharded_forward(sharded, ids, &log);

  double max_abs = 0.0;
  for (std::size_t i = 0; i < dense.size(); ++i)
    max_abs = std::max(max_abs, std::abs(dense[i] - split[i]));

  const ShardPlan plan{shards};
  const double per_layer = comm_volume(plan, cfg, seq_len);
  std::cout << "shards: " << shards << "\n";
  std::cout << "max-abs deviation vs dense: " << max_abs << "\n";
  std::cout << "reductions logged: " << log.records.size() << " (expect "
            << 2 * cfg.n_layers << ")\n";
  std::cout << "comm bytes/layer forward: " << per_layer
            << ", with backward: " << 2.0 * per_layer << "\n";
  std::cout << "comm bytes total forward: "
            << per_layer * static_cast<double>(cfg.n_layers) << "\n";

  if (!comm_csv.empty()) {
    const double ring =
        shards == 1 ? 0.0
                    : 2.0 * static_cast<double>(shards - 1) /
                          static_cast<double>(shards);
    std::ostringstream body;
    body << "layer,point,elements,bytes\n";
    for (const CommRecord& r : log.records) {
      body << r.layer << ',' << r.point << ',' << r.elements << ','
           << static_cast<double>(r.elements) * 8.0 * ring << '\n';
    }
    write_file(comm_csv, body.str());
    write_manifest(comm_csv, "shard-check",
                   {args.checkpoint, args.config, args.vocab, args.lexicon},
                   {comm_csv}, args.seed, &b.run,
                   {{"shards", shards}, {"max_abs_deviation", max_abs}});
  }
  if (max_abs > tolerance) {
    std::cerr << "deviation " << max_abs << " exceeds tolerance " << tolerance
              << "\n";
    return 1;
  }
  return 0;
}

int cmd_grad_check(const std::string& config_path, std::uint64_t seed,
                   double eps, double tolerance) {
  ModelConfig config;
  if (!config_path.empty()) {
    config = RunConfig::load(config_path).model;
    if (config.vocab_size == 0) config.vocab_size = 37;
  } else {
    config = ModelConfig{};
    config.n_layers = 2;
    config.d_model = 16;
    config.n_heads = 2;
    config.d_head = 8;
    config.vocab_size = 37;
    config.max_seq_len = 16;
  }
  const double err = grad_check(config, seed, eps);
  std::cout << "max relative error: " << err << " (tolerance " << tolerance
            << ")\n";
  if (err > tolerance) {
    std::cerr << "gradient check failed\n";
    return 1;
  }
  return 0;
}

int cmd_eval_classify(const ModelArgs& args, const std::string& task_name,
                      const std::string& data, const std::string& report_path,
                      const std::string& span_mode) {
  ClassificationTask task;
  if (task_name == "tnews") task = ClassificationTask::tnews;
  else if (task_name == "iflytek") task = ClassificationTask::iflytek;
  else if (task_name == "ocnli") task = ClassificationTask::ocnli;
  else throw ConfigError("unknown task: " + task_name);
  const SpanMode mode =
      span_mode == "completion" ? SpanMode::completion : SpanMode::full;

  const ModelBundle b = load_bundle(args);
  const auto instances = load_classification(data, task);
  const TemplateScorer scorer = make_template_scorer(b, mode);
  const EvalReport report =
      run_classification(instances, scorer, task, args.seed);
  report.write_csv(report_path);
  print_metrics(report);
  write_manifest(report_path, "eval-classify",
                 {args.checkpoint, args.config, args.vocab, args.lexicon, data},
                 {report_path}, args.seed, &b.run, metrics_json(report));
  return 0;
}

int cmd_eval_chid(const ModelArgs& args, const std::string& data,
                  const std::string& report_path,
                  const std::string& emit_supervised,
                  const std::string& target_mode) {
  const ModelBundle b = load_bundle(args);
  const auto instances = load_chid(data);
  const PplScorer scorer = make_ppl_scorer(b);
  const EvalReport report = run_chid_unsupervised(instances, scorer);
  report.write_csv(report_path);
  print_metrics(report);

  std::vector<std::string> outputs{report_path};
  if (!emit_supervised.empty()) {
    const ChidTarget mode = target_mode == "idiom" ? ChidTarget::idiom_text
                                                   : ChidTarget::option_number;
    std::ostringstream body;
    body << "prompt\ttarget\n";
    for (const ChidInstance& inst : instances) {
      for (std::size_t bi = 0; bi < inst.blanks.size(); ++bi) {
        const std::string isolated = chid_isolate(inst.passage, bi);
        body << chid_supervised_prompt(isolated, inst.blanks[bi].candidates)
             << '\t' << chid_supervised_target(inst.blanks[bi], mode) << '\n';
      }
    }
    write_file(emit_supervised, body.str());
    outputs.push_back(emit_supervised);
  }
  write_manifest(report_path, "eval-chid",
                 {args.checkpoint, args.config, args.vocab, args.lexicon, data},
                 outputs, args.seed, &b.run, metrics_json(report));
  return 0;
}

int cmd_eval_qa(const ModelArgs& args, const std::string& data, bool one_shot,
                const std::string& report_path) {
  const ModelBundle b = load_bundle(args);
  const auto instances = load_qa(data);
  const Generator gen = make_generator(b, args.seed);
  const EvalReport report = run_qa(instances, gen, one_shot, args.seed);
  report.write_csv(report_path);
  print_metrics(report);
  write_manifest(report_path, "eval-qa",
                 {args.checkpoint, args.config, args.vocab, args.lexicon, data},
                 {report_path}, args.seed, &b.run, metrics_json(report));
  return 0;
}

int cmd_eval_dialogue(const ModelArgs& args, const std::string& data,
                      const std::string& embeddings_path,
                      const std::string& report_path) {
  const ModelBundle b = load_bundle(args);
  const auto pairs = load_dialogue(data);
  std::optional<WordEmbeddings> embeddings;
  if (!embeddings_path.empty())
    embeddings = WordEmbeddings::load(embeddings_path);
  const Generator gen = make_generator(b, args.seed);
  const EvalReport report = run_dialogue(
      pairs, gen, embeddings ? &*embeddings : nullptr, args.seed);
  report.write_csv(report_path);
  print_metrics(report);
  std::vector<std::string> inputs{args.checkpoint, args.config, args.vocab,
                                  args.lexicon, data};
  if (!embeddings_path.empty()) inputs.push_back(embeddings_path);
  write_manifest(report_path, "eval-dialogue", inputs, {report_path}, args.seed,
                 &b.run, metrics_json(report));
  return 0;
}

int cmd_eval_entity(const ModelArgs& args, const std::string& data,
                    std::size_t exemplars, const std::string& report_path) {
  const ModelBundle b = load_bundle(args);
  const auto triples = load_entity(data);
  const Generator gen = make_generator(b, args.seed);
  const EvalReport report = run_entity(triples, gen, exemplars, args.seed);
  report.write_csv(report_path);
  print_metrics(report);
  write_manifest(report_path, "eval-entity",
                 {args.checkpoint, args.config, args.vocab, args.lexicon, data},
                 {report_path}, args.seed, &b.run, metrics_json(report));
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"cpm-forge: generative pre-training stack"};
  app.require_subcommand(1);
  int rc = 0;

  // build-vocab
  {
    auto* cmd = app.add_subcommand("build-vocab",
                                   "train a unigram sub-word vocabulary");
    auto opts = std::make_shared<std::tuple<std::string, std::string,
                                            std::string, std::size_t,
                                            std::size_t, double, std::size_t>>(
        "", "", "", 4000, 20000, 0.8, 2);
    cmd->add_option("--corpus", std::get<0>(*opts), "text corpus")->required();
    cmd->add_option("--lexicon", std::get<1>(*opts), "word list")->required();
    cmd->add_option("--out", std::get<2>(*opts), "vocab output")->required();
    cmd->add_option("--target-size", std::get<3>(*opts), "content pieces");
    cmd->add_option("--seed-size", std::get<4>(*opts), "seed candidates");
    cmd->add_option("--prune-keep", std::get<5>(*opts), "kept fraction");
    cmd->add_option("--em-iters", std::get<6>(*opts), "EM iterations per round");
    cmd->callback([opts, &rc] {
      rc = cmd_build_vocab(std::get<0>(*opts), std::get<1>(*opts),
                           std::get<2>(*opts), std::get<3>(*opts),
                           std::get<4>(*opts), std::get<5>(*opts),
                           std::get<6>(*opts));
    });
  }

  // encode / decode
  {
    auto* cmd = app.add_subcommand("encode", "text file to token ids");
    auto opts = std::make_shared<std::array<std::string, 4>>();
    cmd->add_option("--vocab", (*opts)[0])->required();
    cmd->add_option("--lexicon", (*opts)[1])->required();
    cmd->add_option("--in", (*opts)[2])->required();
    cmd->add_option("--out", (*opts)[3])->required();
    cmd->callback([opts, &rc] {
      rc = cmd_encode((*opts)[0], (*opts)[1], (*opts)[2], (*opts)[3]);
    });
  }
  {
    auto* cmd = app.add_subcommand("decode", "token ids to text");
    auto opts = std::make_shared<std::array<std::string, 3>>();
    cmd->add_option("--vocab", (*opts)[0])->required();
    cmd->add_option("--in", (*opts)[1])->required();
    cmd->add_option("--out", (*opts)[2])->required();
    cmd->callback([opts, &rc] {
      rc = cmd_decode((*opts)[0], (*opts)[1], (*opts)[2]);
    });
  }

  // train
  {
    auto* cmd = app.add_subcommand("train", "pre-train on a text corpus");
    struct TrainOpts {
      std::string config, corpus, vocab, lexicon, out;
      std::uint64_t seed = 0;
      std::size_t steps = 0, batch = 0, seq_len = 0;
    };
    auto opts = std::make_shared<TrainOpts>();
    cmd->add_option("--config", opts->config, "config file");
    cmd->add_option("--corpus", opts->corpus)->required();
    cmd->add_option("--vocab", opts->vocab)->required();
    cmd->add_option("--lexicon", opts->lexicon)->required();
    cmd->add_option("--out", opts->out, "checkpoint output")->required();
    cmd->add_option("--seed", opts->seed);
    cmd->add_option("--steps", opts->steps, "override total_steps");
    cmd->add_option("--batch-size", opts->batch, "override batch_size");
    cmd->add_option("--seq-len", opts->seq_len, "override seq_len");
    cmd->callback([opts, &rc] {
      rc = cmd_train(opts->config, opts->corpus, opts->vocab, opts->lexicon,
                     opts->out, opts->seed, opts->steps, opts->batch,
                     opts->seq_len);
    });
  }

  // generate
  {
    auto* cmd = app.add_subcommand("generate", "sample a continuation");
    auto margs = std::make_shared<ModelArgs>();
    auto opts = std::make_shared<
        std::tuple<std::string, double, double, std::size_t, std::string>>(
        "", 0.0, 0.0, 0, "");
    add_model_options(cmd, *margs);
    cmd->add_option("--prompt-file", std::get<0>(*opts))->required();
    cmd->add_option("--p", std::get<1>(*opts), "nucleus mass (default 0.9)");
    cmd->add_option("--temperature", std::get<2>(*opts));
    cmd->add_option("--max-new-tokens", std::get<3>(*opts));
    cmd->add_option("--out", std::get<4>(*opts), "also write the text here");
    cmd->callback([margs, opts, &rc] {
      rc = cmd_generate(*margs, std::get<0>(*opts), std::get<1>(*opts),
                        std::get<2>(*opts), std::get<3>(*opts),
                        std::get<4>(*opts));
    });
  }

  // shard-check
  {
    auto* cmd = app.add_subcommand(
        "shard-check", "verify width-partitioned execution against dense");
    auto margs = std::make_shared<ModelArgs>();
    struct ShardOpts {
      std::size_t shards = 2;
      std::size_t seq_len = 16;
      double tolerance = 1e-10;
      std::string comm_csv;
    };
    auto opts = std::make_shared<ShardOpts>();
    add_model_options(cmd, *margs);
    cmd->add_option("--shards", opts->shards)->required();
    cmd->add_option("--seq-len", opts->seq_len);
    cmd->add_option("--tolerance", opts->tolerance);
    cmd->add_option("--comm-csv", opts->comm_csv, "CommLog CSV output");
    cmd->callback([margs, opts, &rc] {
      rc = cmd_shard_check(*margs, opts->shards, opts->seq_len,
                           opts->tolerance, opts->comm_csv);
    });
  }

  // grad-check
  {
    auto* cmd = app.add_subcommand(
        "grad-check", "backward pass vs central finite differences");
    struct GcOpts {
      std::string config;
      std::uint64_t seed = 0;
      double eps = 1e-5;
      double tolerance = 1e-5;
    };
    auto opts = std::make_shared<GcOpts>();
    cmd->add_option("--config", opts->config, "config file (default: toy)");
    cmd->add_option("--seed", opts->seed);
    cmd->add_option("--eps", opts->eps);
    cmd->add_option("--tolerance", opts->tolerance);
    cmd->callback([opts, &rc] {
      rc = cmd_grad_check(opts->config, opts->seed, opts->eps, opts->tolerance);
    });
  }

  // eval-classify
  {
    auto* cmd = app.add_subcommand("eval-classify",
                                   "perplexity-ranked text classification");
    auto margs = std::make_shared<ModelArgs>();
    auto opts = std::make_shared<std::array<std::string, 4>>();
    (*opts)[3] = "full";
    add_model_options(cmd, *margs);
    cmd->add_option("--task", (*opts)[0], "tnews|iflytek|ocnli")->required();
    cmd->add_option("--data", (*opts)[1])->required();
    cmd->add_option("--report", (*opts)[2])->required();
    cmd->add_option("--score-span", (*opts)[3], "full|completion");
    cmd->callback([margs, opts, &rc] {
      rc = cmd_eval_classify(*margs, (*opts)[0], (*opts)[1], (*opts)[2],
                             (*opts)[3]);
    });
  }

  // eval-chid
  {
    auto* cmd = app.add_subcommand("eval-chid", "idiom cloze evaluation");
    auto margs = std::make_shared<ModelArgs>();
    auto opts = std::make_shared<std::array<std::string, 4>>();
    (*opts)[3] = "option";
    add_model_options(cmd, *margs);
    cmd->add_option("--data", (*opts)[0])->required();
    cmd->add_option("--report", (*opts)[1])->required();
    cmd->add_option("--emit-supervised", (*opts)[2],
                    "write fine-tuning prompts/targets here");
    cmd->add_option("--target", (*opts)[3], "option|idiom");
    cmd->callback([margs, opts, &rc] {
      rc = cmd_eval_chid(*margs, (*opts)[0], (*opts)[1], (*opts)[2],
                         (*opts)[3]);
    });
  }

  // eval-qa
  {
    auto* cmd = app.add_subcommand("eval-qa", "extractive QA evaluation");
    auto margs = std::make_shared<ModelArgs>();
    auto opts = std::make_shared<std::pair<std::array<std::string, 2>, bool>>();
    opts->second = false;
    add_model_options(cmd, *margs);
    cmd->add_option("--data", opts->first[0])->required();
    cmd->add_option("--report", opts->first[1])->required();
    cmd->add_flag("--one-shot", opts->second, "prefix one exemplar");
    cmd->callback([margs, opts, &rc] {
      rc = cmd_eval_qa(*margs, opts->first[0], opts->second, opts->first[1]);
    });
  }

  // eval-dialogue
  {
    auto* cmd = app.add_subcommand("eval-dialogue",
                                   "few-shot dialogue generation");
    auto margs = std::make_shared<ModelArgs>();
    auto opts = std::make_shared<std::array<std::string, 3>>();
    add_model_options(cmd, *margs);
    cmd->add_option("--data", (*opts)[0])->required();
    cmd->add_option("--report", (*opts)[1])->required();
    cmd->add_option("--embeddings", (*opts)[2], "word vector file");
    cmd->callback([margs, opts, &rc] {
      rc = cmd_eval_dialogue(*margs, (*opts)[0], (*opts)[2], (*opts)[1]);
    });
  }

  // eval-entity
  {
    auto* cmd = app.add_subcommand("eval-entity", "entity generation");
    auto margs = std::make_shared<ModelArgs>();
    struct EntityOpts {
      std::string data, report;
      std::size_t exemplars = 2;
    };
    auto opts = std::make_shared<EntityOpts>();
    add_model_options(cmd, *margs);
    cmd->add_option("--data", opts->data)->required();
    cmd->add_option("--report", opts->report)->required();
    cmd->add_option("--exemplars", opts->exemplars, "triples per prompt");
    cmd->callback([margs, opts, &rc] {
      rc = cmd_eval_entity(*margs, opts->data, opts->exemplars, opts->report);
    });
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}

}  // namespace cpmf
