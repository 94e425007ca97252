#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lercause/annotation.hpp"
#include "lercause/checkpoint.hpp"
#include "lercause/corpus.hpp"
#include "lercause/metrics.hpp"
#include "lercause/patterns.hpp"
#include "lercause/service.hpp"
#include "lercause/trainer.hpp"

namespace {

using namespace lercause;
using nlohmann::json;

constexpr int kUsageError = 2;
constexpr int kDataError = 1;

struct Options {
  std::string input;
  std::string output;
  std::string patterns;
  std::string config;
  std::string checkpoint;
  std::string gold;
  std::string report;
  std::string bind = "127.0.0.1:8080";
  std::string static_dir;
  std::string log;
  std::uint64_t seed = 42;
  double train_fraction = 0.8;
  std::optional<double> threshold;
  bool all = false;
};

class DataError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_input(const std::string& path) {
  if (path.empty()) throw DataError("--input is required");
  if (!std::filesystem::exists(path)) throw DataError("no such file: " + path);
}

// Writes to `path`, or stdout when empty. Output goes through a temporary file so
// a failed command never leaves a truncated result behind.
void write_output(const std::string& path, const std::function<void(std::ostream&)>& body) {
  if (path.empty()) {
    body(std::cout);
    std::cout.flush();
    return;
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    body(out);
    out.flush();
    if (!out) throw DataError("write failed: " + path);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<patterns::CausalPattern> load_patterns(const Options& o) {
  return o.patterns.empty() ? patterns::default_patterns() : patterns::read_patterns_file(o.patterns);
}

classifier::ModelConfig load_config(const Options& o, classifier::ModelConfig base) {
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw DataError("cannot open config " + o.config);
    base = classifier::config_from_json(json::parse(in), base);
  }
  return base;
}

std::vector<json> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return corpus::read_json_lines(in);
}

int cmd_ingest(const Options& o) {
  require_input(o.input);
  std::vector<corpus::CorpusRecord> records;
  for (const auto& doc : corpus::read_documents_file(o.input)) {
    auto part = corpus::ingest(doc);
    records.insert(records.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  write_output(o.output, [&](std::ostream& out) { corpus::write_corpus(out, records); });
  std::cerr << "ingested " << records.size() << " records\n";
  return 0;
}

int cmd_split(const Options& o) {
  require_input(o.input);
  if (o.output.empty()) throw DataError("--output <directory> is required");
  const auto records = corpus::read_corpus_file(o.input);
  const auto [train, test] = corpus::split_train_test(records, {o.train_fraction, o.seed});
  std::filesystem::create_directories(o.output);
  const std::filesystem::path dir(o.output);
  write_output((dir / "train.jsonl").string(), [&](std::ostream& out) { corpus::write_corpus(out, train); });
  write_output((dir / "test.jsonl").string(), [&](std::ostream& out) { corpus::write_corpus(out, test); });
  std::cerr << "train " << train.size() << " test " << test.size() << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  require_input(o.input);
  if (o.output.empty()) throw DataError("--output <checkpoint> is required");
  auto config = load_config(o, classifier::ModelConfig{});
  config.seed = o.seed;
  if (o.threshold) config.threshold = *o.threshold;
  config.validate();
  const auto records = corpus::read_corpus_file(o.input);
  auto [checkpoint, report] = classifier::train(records, config, [](const classifier::EpochStats& e) {
    std::fprintf(stderr, "epoch %zu train_loss %.4f val_loss %.4f val_acc %.4f\n", e.epoch, e.train_loss,
                 e.validation_loss, e.validation_accuracy);
  });
  classifier::save_checkpoint_file(o.output, checkpoint);
  const std::string report_path = o.report.empty() ? o.output + ".report.json" : o.report;
  write_output(report_path, [&](std::ostream& out) { out << classifier::to_json(report).dump(2) << '\n'; });
  std::cerr << "best epoch " << report.best_epoch << ", checkpoint " << o.output << "\n";
  return 0;
}

int cmd_classify(const Options& o) {
  require_input(o.input);
  if (o.checkpoint.empty()) throw DataError("--checkpoint is required");
  const auto checkpoint = classifier::load_checkpoint_file(o.checkpoint);
  const double threshold = o.threshold.value_or(checkpoint.config().threshold);
  const auto records = corpus::read_corpus_file(o.input);
  std::vector<std::string> texts;
  texts.reserve(records.size());
  for (const auto& r : records) texts.push_back(r.text);
  const auto predictions = classifier::predict(checkpoint, texts);
  write_output(o.output, [&](std::ostream& out) {
    for (std::size_t i = 0; i < records.size(); ++i) {
      json line = corpus::to_json(records[i]);
      line["predicted_label"] = corpus::to_string(classifier::label_for(predictions[i].probability, threshold));
      line["probability"] = predictions[i].probability;
      out << line.dump() << '\n';
    }
  });
  return 0;
}

int cmd_extract(const Options& o) {
  require_input(o.input);
  const patterns::PatternMatcher matcher(load_patterns(o));
  std::vector<patterns::CauseEffectPair> pairs;
  for (const auto& line : read_lines(o.input)) {
    const auto record = corpus::record_from_json(line);
    if (!o.all) {
      const auto it = line.find("predicted_label");
      const auto label = it != line.end() ? corpus::parse_label(it->get<std::string>()) : record.label;
      if (label != corpus::Label::causal) continue;
    }
    auto found = matcher.extract(textprep::clean_text(record.text), record.id);
    pairs.insert(pairs.end(), std::make_move_iterator(found.begin()), std::make_move_iterator(found.end()));
  }
  write_output(o.output, [&](std::ostream& out) {
    for (const auto& p : pairs) out << patterns::to_json(p).dump() << '\n';
  });
  std::cerr << "extracted " << pairs.size() << " pairs\n";
  return 0;
}

std::vector<patterns::CauseEffectPair> read_pairs(const std::string& path) {
  std::vector<patterns::CauseEffectPair> out;
  for (const auto& line : read_lines(path)) out.push_back(patterns::pair_from_json(line));
  return out;
}

int cmd_evaluate(const Options& o) {
  require_input(o.input);
  json result;
  std::string rendered;
  if (!o.gold.empty()) {
    require_input(o.gold);
    const auto score = metrics::score_extraction(read_pairs(o.input), read_pairs(o.gold));
    result = metrics::to_json(score);
    rendered = metrics::render(score);
  } else {
    std::vector<corpus::Label> predicted;
    std::vector<corpus::Label> gold;
    for (const auto& line : read_lines(o.input)) {
      const auto record = corpus::record_from_json(line);
      const auto it = line.find("predicted_label");
      if (it == line.end() || !it->is_string()) throw DataError("record " + record.id + " has no predicted_label");
      predicted.push_back(corpus::parse_label(it->get<std::string>()));
      gold.push_back(record.label);
    }
    const auto report = metrics::evaluate(predicted, gold);
    result = metrics::to_json(report);
    rendered = metrics::render(report);
  }
  std::cout << rendered;
  if (!o.output.empty()) write_output(o.output, [&](std::ostream& out) { out << result.dump(2) << '\n'; });
  return 0;
}

int cmd_histogram(const Options& o) {
  require_input(o.input);
  const auto counts = patterns::pattern_histogram(corpus::read_corpus_file(o.input), load_patterns(o));
  std::vector<std::pair<std::string, std::size_t>> rows(counts.begin(), counts.end());
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  write_output(o.output, [&](std::ostream& out) {
    for (const auto& [phrase, count] : rows) out << count << '\t' << phrase << '\n';
  });
  return 0;
}

int cmd_gradcheck(const Options& o) {
  const auto config = load_config(o, classifier::tiny_config());
  const auto result = classifier::gradient_check_detail(config, o.seed);
  for (const auto& [name, err] : result.per_tensor) std::printf("%-32s %.3e\n", name.c_str(), err);
  std::printf("max_relative_error %.6e over %zu coordinates\n", result.max_relative_error, result.coordinates);
  return 0;
}

int cmd_serve(const Options& o) {
  require_input(o.input);
  const auto [host, port] = service::parse_bind(o.bind);
  const std::string log_path = o.log.empty() ? annotation::default_log_path(o.input) : o.log;

  // Signals are taken synchronously by a watcher thread so shutdown runs outside a handler.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  annotation::AnnotationStore store(o.input, log_path);
  std::optional<std::string> static_dir;
  if (!o.static_dir.empty()) static_dir = o.static_dir;
  service::AnnotationServer server(store, static_dir);
  const int bound = server.bind(host, port);
  if (bound < 0) throw DataError("cannot bind " + o.bind);

  std::thread watcher([&] {
    int received = 0;
    sigwait(&signals, &received);
    server.stop();
  });
  std::cout << "listening on " << host << ":" << bound << std::endl;
  const bool ok = server.listen_after_bind();
  pthread_kill(watcher.native_handle(), SIGTERM);
  watcher.join();
  return ok ? 0 : kDataError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causality mining over licensee event reports"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;

  auto add_io = [&](CLI::App* cmd) {
    cmd->add_option("--input,-i", o.input, "Input file");
    cmd->add_option("--output,-o", o.output, "Output file or directory (stdout when omitted)");
  };

  std::vector<std::pair<CLI::App*, std::function<int(const Options&)>>> commands;
  auto command = [&](const char* name, const char* help, std::function<int(const Options&)> run) {
    auto* cmd = app.add_subcommand(name, help);
    add_io(cmd);
    commands.emplace_back(cmd, std::move(run));
    return cmd;
  };

  command("ingest", "Documents JSONL to windowed corpus JSONL", cmd_ingest);
  command("split", "Partition a corpus into train.jsonl and test.jsonl", cmd_split)
      ->add_option("--train-fraction", o.train_fraction, "Share of records for training")
      ->check(CLI::Range(0.0, 1.0));
  auto* train = command("train", "Fit the classifier and write a checkpoint", cmd_train);
  train->add_option("--config", o.config, "Model config JSON (overrides defaults)");
  train->add_option("--report", o.report, "Training report path (default <output>.report.json)");
  train->add_option("--threshold", o.threshold, "Decision threshold stored with the model");
  auto* classify = command("classify", "Append predicted labels and probabilities", cmd_classify);
  classify->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  classify->add_option("--threshold", o.threshold, "Override the checkpoint's decision threshold");
  auto* extract = command("extract", "Extract cause-effect pairs from causal records", cmd_extract);
  extract->add_option("--patterns", o.patterns, "Pattern table (<EC|CE><TAB><phrase> per line)");
  extract->add_flag("--all", o.all, "Mine every record regardless of label");
  command("evaluate", "Classification report, or extraction score with --gold", cmd_evaluate)
      ->add_option("--gold", o.gold, "Gold cause-effect pairs JSONL");
  command("histogram", "Pattern match counts, most frequent first", cmd_histogram)
      ->add_option("--patterns", o.patterns, "Pattern table");
  command("gradcheck", "Finite-difference check of the network gradients", cmd_gradcheck)
      ->add_option("--config", o.config, "Model config JSON (overrides the tiny config)");
  auto* serve = command("serve", "Run the annotation service over a corpus", cmd_serve);
  serve->add_option("--bind", o.bind, "host:port or port");
  serve->add_option("--static", o.static_dir, "Directory of UI assets served at /");
  serve->add_option("--log", o.log, "Annotation log (default <input>.annotations.jsonl)");
  app.add_option("--seed", o.seed, "Seed for every random choice")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  for (const auto& [cmd, run] : commands) {
    if (!cmd->parsed()) continue;
    try {
      return run(o);
    } catch (const std::exception& e) {
      std::cerr << "lercause " << cmd->get_name() << ": " << e.what() << "\n";
      return kDataError;
    }
  }
  return kUsageError;
}
