#include "cli.hpp"

#include "dcqa/analysis.hpp"
#include "dcqa/data.hpp"
#include "dcqa/errors.hpp"
#include "dcqa/version.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace dcqa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json default_config_json() {
  return json{
      {"dataset",
       {{"tag", "SYNTHETIC"},
        {"data_dir", ""},
        {"dev_seed", 1},
        {"synthetic",
         {{"n_examples", 200}, {"n_choices", 5}, {"vocab_size", 64}, {"seed", 1}}}}},
      {"backend",
       {{"name", "reference"},
        {"hidden_dim", 16},
        {"max_seq_len", 64},
        {"clue_len", 4},
        {"vocab_size", 2048},
        {"n_layers", 1},
        {"ff_dim", 0},
        {"seed", 7},
        {"model_dir", ""}}},
      {"model",
       {{"mlp_hidden", 16},
        {"ablation", json::array()},
        {"choice_attn_per_pair", false},
        {"n_choices", 0}}},
      {"training",
       {{"learning_rate", 1e-3},
        {"batch_size", 16},
        {"max_epochs", 50},
        {"early_stop_patience", 15},
        {"weight_decay", 0.01},
        {"seed", 1}}},
      {"output", {{"dir", "runs"}}}};
}

void merge_into(json& base, const json& overlay) {
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object())
      merge_into(base[it.key()], *it);
    else
      base[it.key()] = *it;
  }
}

void apply_override(json& doc, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like path.to.key=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError("override has an empty path segment: " + assignment);
    if (dot == std::string::npos) {
      json value = json::parse(raw, nullptr, false);
      (*node)[key] = value.is_discarded() ? json(raw) : value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

std::string env_data_dir() {
  const char* v = std::getenv("DCQA_DATA_DIR");
  return v ? v : "";
}

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    auto comma = csv.find(',', start);
    const std::string tok = csv.substr(start, comma == std::string::npos ? comma : comma - start);
    if (!tok.empty()) out.push_back(tok);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> out;
  for (const auto& tok : split_csv(csv)) out.push_back(std::stoull(tok));
  if (out.empty()) throw ConfigError("empty seed list");
  return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  for (const auto& tok : split_csv(csv)) out.push_back(std::stod(tok));
  if (out.empty()) throw ConfigError("empty value list");
  return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  for (const auto& tok : split_csv(csv)) out.push_back(std::stoi(tok));
  if (out.empty()) throw ConfigError("empty value list");
  return out;
}

std::string sanitize_id(const std::string& id) {
  std::string out = id;
  for (auto& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  return out;
}

class Manifest {
 public:
  Manifest(std::string command, json config)
      : command_(std::move(command)), config_(std::move(config)),
        start_(std::chrono::steady_clock::now()) {}

  void set(const std::string& key, json value) { extra_[key] = std::move(value); }

  void write(const fs::path& dir) const {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json m{{"command", command_},
           {"config", config_},
           {"code_version", kVersion},
           {"wall_time_seconds", wall}};
    for (auto it = extra_.begin(); it != extra_.end(); ++it) m[it.key()] = *it;
    fs::create_directories(dir);
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    if (!os) throw IoError("cannot write manifest under " + dir.string());
    os << m.dump(2) << '\n';
  }

 private:
  std::string command_;
  json config_;
  json extra_ = json::object();
  std::chrono::steady_clock::time_point start_;
};

json run_result_json(const RunResult& r) {
  return json{{"best_dev_accuracy", r.best_dev_accuracy},
              {"test_accuracy", r.test_accuracy},
              {"epochs_run", r.epochs_run},
              {"best_epoch", r.best_epoch},
              {"seed", r.seed}};
}

void write_history(const fs::path& path, const RunResult& r) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  for (const auto& e : r.history)
    os << json{{"epoch", e.epoch}, {"loss", e.train_loss}, {"dev_accuracy", e.dev_accuracy}}.dump()
       << '\n';
}

}  // namespace

TrainSetup ExperimentConfig::setup() const {
  TrainSetup s;
  s.train = training;
  s.train.dataset = dataset_tag;
  s.model = model;
  s.backend = backend;
  return s;
}

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides) {
  json doc = default_config_json();
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    json user = json::parse(is, nullptr, false);
    if (user.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
    merge_into(doc, user);
  }
  for (const auto& o : overrides) apply_override(doc, o);

  ExperimentConfig cfg;
  try {
    const json& ds = doc.at("dataset");
    cfg.dataset_tag = dataset_tag_from_string(ds.at("tag").get<std::string>());
    cfg.data_dir = ds.value("data_dir", "");
    cfg.dev_seed = ds.value("dev_seed", std::uint64_t{1});
    const json& syn = ds.at("synthetic");
    cfg.synthetic = {syn.value("n_examples", 200), syn.value("n_choices", 5),
                     syn.value("vocab_size", 64), syn.value("seed", std::uint64_t{1})};

    const json& be = doc.at("backend");
    cfg.backend.config.name = be.at("name").get<std::string>();
    cfg.backend.config.hidden_dim = be.at("hidden_dim").get<int>();
    cfg.backend.config.max_seq_len = be.at("max_seq_len").get<int>();
    cfg.backend.config.clue_len = be.at("clue_len").get<int>();
    cfg.backend.config.vocab_size = be.at("vocab_size").get<int>();
    cfg.backend.config.n_layers = be.at("n_layers").get<int>();
    cfg.backend.config.ff_dim = be.at("ff_dim").get<int>();
    cfg.backend.seed = be.value("seed", std::uint64_t{7});
    cfg.backend.model_dir = be.value("model_dir", "");

    const json& mo = doc.at("model");
    cfg.model.mlp_hidden = mo.at("mlp_hidden").get<int>();
    cfg.model.choice_attn_per_pair = mo.value("choice_attn_per_pair", false);
    for (const auto& f : mo.at("ablation"))
      cfg.model.ablation.insert(ablation_flag_from_string(f.get<std::string>()));
    int n_choices = mo.value("n_choices", 0);
    if (n_choices == 0)
      n_choices = cfg.dataset_tag == DatasetTag::SYNTHETIC ? cfg.synthetic.n_choices
                                                           : dataset_choice_count(cfg.dataset_tag);
    cfg.model.n_choices = n_choices;
    cfg.model.hidden_dim = cfg.backend.config.hidden_dim;
    cfg.model.clue_len = cfg.backend.config.clue_len;

    const json& tr = doc.at("training");
    cfg.training.learning_rate = tr.at("learning_rate").get<double>();
    cfg.training.batch_size = tr.at("batch_size").get<int>();
    cfg.training.max_epochs = tr.at("max_epochs").get<int>();
    cfg.training.early_stop_patience = tr.at("early_stop_patience").get<int>();
    cfg.training.weight_decay = tr.at("weight_decay").get<double>();
    cfg.training.seed = tr.at("seed").get<std::uint64_t>();
    cfg.training.dataset = cfg.dataset_tag;

    cfg.output_dir = doc.at("output").value("dir", "runs");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }

  cfg.backend.config.validate();
  cfg.model.validate();
  cfg.training.validate();
  if (cfg.backend.config.name == "pretrained" && cfg.backend.model_dir.empty())
    throw ConfigError("backend.model_dir is required for the pretrained backend");

  doc["model"]["n_choices"] = cfg.model.n_choices;
  cfg.resolved_json = doc.dump(2);
  return cfg;
}

DatasetSplits load_splits(const ExperimentConfig& cfg) {
  if (cfg.dataset_tag == DatasetTag::SYNTHETIC && cfg.data_dir.empty()) {
    return make_synthetic_dataset(cfg.synthetic.n_examples, cfg.synthetic.n_choices,
                                  cfg.synthetic.vocab_size, cfg.synthetic.seed);
  }
  std::string dir = cfg.data_dir.empty() ? env_data_dir() : cfg.data_dir;
  if (dir.empty())
    throw ConfigError("dataset.data_dir is empty and DCQA_DATA_DIR is not set");
  DatasetSplits out;
  out.train = read_unified(dir + "/train.jsonl");
  out.dev = read_unified(dir + "/dev.jsonl");
  if (fs::exists(dir + "/test.jsonl")) out.test = read_unified(dir + "/test.jsonl");
  return out;
}

std::string variant_name_for(const AblationSet& flags) {
  for (AblationVariant v : all_ablation_variants())
    if (ablation_flags(v) == flags) return v == AblationVariant::FULL ? "FULL" : to_string(v);
  return "custom";
}

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

fs::path run_directory(const ExperimentConfig& cfg, const std::string& out_override,
                       std::uint64_t seed) {
  fs::path base = out_override.empty() ? cfg.output_dir : out_override;
  return base / to_string(cfg.dataset_tag) / cfg.backend.config.name /
         variant_name_for(cfg.model.ablation) / std::to_string(seed);
}

int cmd_prepare_data(DatasetTag tag, const std::string& data_dir, std::uint64_t seed,
                     const std::string& out, const ExperimentConfig::Synthetic& syn) {
  Manifest manifest("prepare-data",
                    json{{"dataset", to_string(tag)},
                         {"data_dir", data_dir},
                         {"seed", seed},
                         {"synthetic",
                          {{"n_examples", syn.n_examples},
                           {"n_choices", syn.n_choices},
                           {"vocab_size", syn.vocab_size},
                           {"seed", syn.seed}}}});
  DatasetSplits splits;
  if (tag == DatasetTag::SYNTHETIC) {
    splits = make_synthetic_dataset(syn.n_examples, syn.n_choices, syn.vocab_size, syn.seed);
  } else {
    std::string dir = data_dir.empty() ? env_data_dir() : data_dir;
    if (dir.empty()) throw ConfigError("--data-dir is empty and DCQA_DATA_DIR is not set");
    splits = prepare_dataset(tag, dir + "/" + to_string(tag), seed);
  }
  fs::create_directories(out);
  write_unified(out + "/train.jsonl", splits.train);
  write_unified(out + "/dev.jsonl", splits.dev);
  write_unified(out + "/test.jsonl", splits.test);
  manifest.set("counts", json{{"train", splits.train.size()},
                              {"dev", splits.dev.size()},
                              {"test", splits.test.size()}});
  manifest.write(out);
  std::cout << to_string(tag) << ": train " << splits.train.size() << ", dev "
            << splits.dev.size() << ", test " << splits.test.size() << "\n";
  return kExitOk;
}

int cmd_train(const CommonArgs& args, std::int64_t seed_override) {
  ExperimentConfig cfg = load_experiment_config(args.config_path, args.overrides);
  if (seed_override >= 0) cfg.training.seed = static_cast<std::uint64_t>(seed_override);
  Manifest manifest("train", json::parse(cfg.resolved_json));
  manifest.set("seed", cfg.training.seed);

  DatasetSplits splits = load_splits(cfg);
  fs::path dir = run_directory(cfg, args.out_dir, cfg.training.seed);
  fs::create_directories(dir);

  RunResult r = train(cfg.setup(), splits, (dir / "checkpoint.dcqa").string());

  std::ofstream rs(dir / "result.json", std::ios::trunc);
  rs << run_result_json(r).dump(2) << '\n';
  write_history(dir / "history.jsonl", r);
  manifest.write(dir);

  std::cout << "run " << dir.string() << "\n"
            << "epochs " << r.epochs_run << " (best " << r.best_epoch << ")\n"
            << "dev accuracy " << r.best_dev_accuracy << "\n"
            << "test accuracy " << r.test_accuracy << "\n";
  return kExitOk;
}

int cmd_multi_seed(const CommonArgs& args, const std::string& seeds_csv) {
  ExperimentConfig cfg = load_experiment_config(args.config_path, args.overrides);
  std::vector<std::uint64_t> seeds =
      seeds_csv.empty() ? default_seeds(cfg.dataset_tag) : parse_seed_list(seeds_csv);
  Manifest manifest("multi-seed", json::parse(cfg.resolved_json));
  manifest.set("seeds", seeds);

  DatasetSplits splits = load_splits(cfg);
  MultiSeedResult result = multi_seed_run(cfg.setup(), seeds, splits);

  fs::path dir = (args.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(args.out_dir)) /
                 to_string(cfg.dataset_tag) / cfg.backend.config.name /
                 variant_name_for(cfg.model.ablation) / "multi-seed";
  fs::create_directories(dir);
  std::ofstream rec(dir / "records.jsonl", std::ios::trunc);
  for (const auto& run : result.runs) {
    json line{{"seed", run.seed}, {"failed", run.failed}};
    if (run.failed)
      line["error"] = run.error;
    else
      line["result"] = run_result_json(run.result);
    rec << line.dump() << '\n';
  }
  std::ofstream sum(dir / "summary.json", std::ios::trunc);
  sum << json{{"dev", result.dev_formatted},
              {"test", result.test_formatted},
              {"dev_mean", result.dev_mean},
              {"dev_std", result.dev_std},
              {"test_mean", result.test_mean},
              {"test_std", result.test_std},
              {"any_failed", result.any_failed}}
             .dump(2)
      << '\n';
  manifest.write(dir);

  std::cout << to_string(cfg.dataset_tag) << " dev " << result.dev_formatted << " test "
            << result.test_formatted << (result.any_failed ? "  [partial]" : "") << "\n";
  return result.any_failed ? kExitRuntime : kExitOk;
}

int cmd_grid_search(const CommonArgs& args, const std::string& lrs_csv,
                    const std::string& batches_csv) {
  ExperimentConfig cfg = load_experiment_config(args.config_path, args.overrides);
  std::vector<double> lrs = lrs_csv.empty() ? kLearningRateGrid : parse_double_list(lrs_csv);
  std::vector<int> batches = batches_csv.empty() ? kBatchSizeGrid : parse_int_list(batches_csv);
  Manifest manifest("grid-search", json::parse(cfg.resolved_json));

  DatasetSplits splits = load_splits(cfg);
  GridSearchResult result = grid_search(cfg.setup(), lrs, batches, splits);

  fs::path dir = (args.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(args.out_dir)) /
                 to_string(cfg.dataset_tag) / cfg.backend.config.name / "grid-search";
  fs::create_directories(dir);
  std::ofstream rec(dir / "records.jsonl", std::ios::trunc);
  std::cout << "lr        batch  dev        test\n";
  for (const auto& c : result.cells) {
    rec << json{{"learning_rate", c.learning_rate},
                {"batch_size", c.batch_size},
                {"dev_accuracy", c.dev_accuracy},
                {"test_accuracy", c.test_accuracy}}
               .dump()
        << '\n';
    std::printf("%-9g %-6d %-10.4f %-10.4f\n", c.learning_rate, c.batch_size, c.dev_accuracy,
                c.test_accuracy);
  }
  manifest.set("best",
               json{{"learning_rate", result.best_learning_rate},
                    {"batch_size", result.best_batch_size}});
  manifest.write(dir);
  std::cout << "best: lr " << result.best_learning_rate << ", batch " << result.best_batch_size
            << "\n";
  return kExitOk;
}

DatasetSplits splits_for_data_args(const std::string& config_path,
                                   const std::vector<std::string>& overrides,
                                   const std::string& data_dir) {
  if (!data_dir.empty()) {
    DatasetSplits out;
    out.train = read_unified(data_dir + "/train.jsonl");
    out.dev = read_unified(data_dir + "/dev.jsonl");
    if (fs::exists(data_dir + "/test.jsonl")) out.test = read_unified(data_dir + "/test.jsonl");
    return out;
  }
  return load_splits(load_experiment_config(config_path, overrides));
}

int cmd_eval(const std::string& checkpoint, const std::string& split_name,
             const CommonArgs& args, const std::string& data_dir) {
  auto model = load_model(checkpoint);
  DatasetSplits splits = splits_for_data_args(args.config_path, args.overrides, data_dir);
  const std::vector<MCQExample>* split = nullptr;
  if (split_name == "train") split = &splits.train;
  else if (split_name == "dev") split = &splits.dev;
  else if (split_name == "test") split = &splits.test;
  else throw ConfigError("unknown split: " + split_name);

  double acc = evaluate_accuracy(*model, *split);
  std::printf("%s accuracy %.17g\n", split_name.c_str(), acc);
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    std::ofstream os(fs::path(args.out_dir) / ("eval_" + split_name + ".json"), std::ios::trunc);
    os << json{{"split", split_name}, {"accuracy", acc}, {"checkpoint", checkpoint}}.dump(2)
       << '\n';
    Manifest manifest("eval", json{{"checkpoint", checkpoint}, {"split", split_name}});
    manifest.write(args.out_dir);
  }
  return kExitOk;
}

int cmd_visualize(const std::string& checkpoint, const std::string& example_id, bool stages,
                  const std::string& format_name, const CommonArgs& args,
                  const std::string& data_dir, const std::string& split_name) {
  auto model = load_model(checkpoint);
  DatasetSplits splits = splits_for_data_args(args.config_path, args.overrides, data_dir);
  const std::vector<MCQExample>* split =
      split_name == "train" ? &splits.train : split_name == "test" ? &splits.test : &splits.dev;

  const MCQExample* example = nullptr;
  for (const auto& ex : *split)
    if (ex.id == example_id) example = &ex;
  if (example == nullptr) throw ArgumentError("example id not found in split: " + example_id);

  ForwardOutput fwd = model->forward(*example);
  HeatmapFormat format = heatmap_format_from_string(format_name);

  HeatmapData data;
  if (stages) {
    data = heatmap_data(stage_triplet(fwd), example->choices);
  } else {
    std::vector<Mat> a_mats;
    std::vector<Mask> a_masks;
    for (const auto& c : fwd.choices) {
      a_mats.push_back(c.A);
      a_masks.push_back(c.a_mask);
    }
    data = heatmap_data(token_weights(fwd.Q, fwd.q_mask, a_mats, a_masks, fwd.q_tokens),
                        example->choices);
  }

  const std::string ext = format_name;
  fs::path dir = args.out_dir.empty() ? fs::path(".") : fs::path(args.out_dir);
  fs::create_directories(dir);
  fs::path out = dir / (sanitize_id(example_id) + "_weights." + ext);
  export_heatmap(data, out.string(), format);
  Manifest manifest("visualize", json{{"checkpoint", checkpoint},
                                      {"example_id", example_id},
                                      {"stages", stages},
                                      {"format", format_name}});
  manifest.write(dir);
  std::cout << "wrote " << out.string() << "\n";
  return kExitOk;
}

int cmd_ablate(const CommonArgs& args, const std::string& variants_csv,
               const std::string& seeds_csv) {
  ExperimentConfig cfg = load_experiment_config(args.config_path, args.overrides);
  std::vector<AblationVariant> variants;
  if (variants_csv.empty()) {
    variants = all_ablation_variants();
  } else {
    for (const auto& tok : split_csv(variants_csv))
      variants.push_back(ablation_variant_from_string(tok));
  }
  std::vector<std::uint64_t> seeds =
      seeds_csv.empty() ? default_seeds(cfg.dataset_tag) : parse_seed_list(seeds_csv);

  Manifest manifest("ablate", json::parse(cfg.resolved_json));
  manifest.set("seeds", seeds);

  DatasetSplits splits = load_splits(cfg);
  AblationReport report = run_ablation(cfg.setup(), variants, seeds, splits);

  fs::path dir = (args.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(args.out_dir)) /
                 to_string(cfg.dataset_tag) / cfg.backend.config.name / "ablation";
  fs::create_directories(dir);
  std::ofstream rec(dir / "records.jsonl", std::ios::trunc);
  for (const auto& row : report.rows) {
    for (const auto& run : row.result.runs) {
      json line{{"variant", to_string(row.variant)}, {"seed", run.seed}, {"failed", run.failed}};
      if (!run.failed) line["result"] = run_result_json(run.result);
      rec << line.dump() << '\n';
    }
  }
  manifest.write(dir);
  std::cout << format_ablation_table(report);
  return kExitOk;
}

int cmd_count_params(const std::string& checkpoint, const CommonArgs& args) {
  std::unique_ptr<DCQAModel> model;
  if (!checkpoint.empty()) {
    model = load_model(checkpoint);
  } else {
    ExperimentConfig cfg = load_experiment_config(args.config_path, args.overrides);
    TrainSetup setup = cfg.setup();
    model = std::make_unique<DCQAModel>(setup.model, setup.backend, /*head_seed=*/0);
  }
  ParameterCount count = count_parameters(*model);
  std::cout << "parameters: " << count.total << " (" << count.millions << "M)\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"DCQA: multiple-choice QA by commonality subtraction"};
  app.require_subcommand(1);

  CommonArgs common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "experiment config (JSON)");
    sub->add_option("--set", common.overrides, "dotted-path config override, key=value");
    sub->add_option("--out", common.out_dir, "output directory");
  };

  // prepare-data
  std::string prep_dataset, prep_data_dir;
  std::uint64_t prep_seed = 1;
  std::string prep_out = "prepared";
  ExperimentConfig::Synthetic syn;
  auto* prep = app.add_subcommand("prepare-data", "build unified train/dev/test splits");
  prep->add_option("--dataset", prep_dataset, "dataset tag")->required();
  prep->add_option("--data-dir", prep_data_dir, "directory with the published files");
  prep->add_option("--seed", prep_seed, "in-house dev split seed");
  prep->add_option("--out", prep_out, "output directory");
  prep->add_option("--synthetic-examples", syn.n_examples, "synthetic example count");
  prep->add_option("--synthetic-choices", syn.n_choices, "synthetic choice count");
  prep->add_option("--synthetic-vocab", syn.vocab_size, "synthetic vocabulary size");

  // train
  std::int64_t train_seed = -1;
  auto* tr = app.add_subcommand("train", "train one model");
  add_common(tr);
  tr->add_option("--seed", train_seed, "override training.seed");

  // multi-seed
  std::string seeds_csv;
  auto* ms = app.add_subcommand("multi-seed", "train across seeds, report mean and std");
  add_common(ms);
  ms->add_option("--seeds", seeds_csv, "comma-separated seeds");

  // grid-search
  std::string lrs_csv, batches_csv;
  auto* gs = app.add_subcommand("grid-search", "sweep learning rate and batch size");
  add_common(gs);
  gs->add_option("--lrs", lrs_csv, "comma-separated learning rates");
  gs->add_option("--batches", batches_csv, "comma-separated batch sizes");

  // eval
  std::string eval_checkpoint, eval_split = "test", eval_data;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  add_common(ev);
  ev->add_option("--checkpoint", eval_checkpoint, "model checkpoint")->required();
  ev->add_option("--split", eval_split, "train|dev|test");
  ev->add_option("--data", eval_data, "directory with unified splits");

  // ablate
  std::string variants_csv, ablate_seeds;
  auto* ab = app.add_subcommand("ablate", "run ablation variants");
  add_common(ab);
  ab->add_option("--variants", variants_csv, "comma-separated variant ids (default: all)");
  ab->add_option("--seeds", ablate_seeds, "comma-separated seeds");

  // visualize
  std::string vis_checkpoint, vis_example, vis_format = "json", vis_data, vis_split = "dev";
  bool vis_stages = false;
  auto* vz = app.add_subcommand("visualize", "export token-weight heatmaps");
  add_common(vz);
  vz->add_option("--checkpoint", vis_checkpoint, "model checkpoint")->required();
  vz->add_option("--example-id", vis_example, "example id")->required();
  vz->add_flag("--stages", vis_stages, "export the three-stage refinement maps");
  vz->add_option("--format", vis_format, "json|csv|png");
  vz->add_option("--data", vis_data, "directory with unified splits");
  vz->add_option("--split", vis_split, "train|dev|test");

  // count-params
  std::string cp_checkpoint;
  auto* cp = app.add_subcommand("count-params", "count learnable parameters");
  add_common(cp);
  cp->add_option("--checkpoint", cp_checkpoint, "model checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (prep->parsed())
      return cmd_prepare_data(dataset_tag_from_string(prep_dataset), prep_data_dir, prep_seed,
                              prep_out, syn);
    if (tr->parsed()) return cmd_train(common, train_seed);
    if (ms->parsed()) return cmd_multi_seed(common, seeds_csv);
    if (gs->parsed()) return cmd_grid_search(common, lrs_csv, batches_csv);
    if (ev->parsed()) return cmd_eval(eval_checkpoint, eval_split, common, eval_data);
    if (ab->parsed()) return cmd_ablate(common, variants_csv, ablate_seeds);
    if (vz->parsed())
      return cmd_visualize(vis_checkpoint, vis_example, vis_stages, vis_format, common, vis_data,
                           vis_split);
    if (cp->parsed()) return cmd_count_params(cp_checkpoint, common);
    std::cerr << "no command given\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const SchemaError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const LabelError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace dcqa::cli
