#include "dcqa/data.hpp"

#include "dcqa/errors.hpp"
#include "dcqa/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dcqa {

using nlohmann::json;

std::string to_string(DatasetTag tag) {
  switch (tag) {
    case DatasetTag::CSQA: return "CSQA";
    case DatasetTag::OBQA: return "OBQA";
    case DatasetTag::ARC_E: return "ARC-E";
    case DatasetTag::ARC_C: return "ARC-C";
    case DatasetTag::QASC: return "QASC";
    case DatasetTag::PIQA: return "PIQA";
    case DatasetTag::SocialIQA: return "SocialIQA";
    case DatasetTag::SYNTHETIC: return "SYNTHETIC";
  }
  throw ArgumentError("unknown dataset tag");
}

DatasetTag dataset_tag_from_string(const std::string& name) {
  for (DatasetTag t : {DatasetTag::CSQA, DatasetTag::OBQA, DatasetTag::ARC_E, DatasetTag::ARC_C,
                       DatasetTag::QASC, DatasetTag::PIQA, DatasetTag::SocialIQA,
                       DatasetTag::SYNTHETIC}) {
    if (to_string(t) == name) return t;
  }
  throw ConfigError("unknown dataset tag: " + name);
}

int dataset_choice_count(DatasetTag tag) {
  switch (tag) {
    case DatasetTag::CSQA: return 5;
    case DatasetTag::OBQA: return 4;
    case DatasetTag::ARC_E: return 4;
    case DatasetTag::ARC_C: return 4;
    case DatasetTag::QASC: return 8;
    case DatasetTag::PIQA: return 2;
    case DatasetTag::SocialIQA: return 3;
    case DatasetTag::SYNTHETIC: return 0;  // declared by the generator
  }
  throw ArgumentError("unknown dataset tag");
}

namespace {

json parse_record(const std::string& line, long line_no) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ParseError("malformed record", line_no);
  return j;
}

// ARC-style records: {"id", "question": {"stem", "choices": [{"label","text"}]}, "answerKey"}.
// Covers CSQA, OBQA, ARC-E/C and QASC.
MCQExample parse_arc_style(const json& j, long line_no, DatasetTag tag) {
  MCQExample ex;
  ex.dataset_tag = tag;
  try {
    ex.id = j.value("id", "line" + std::to_string(line_no));
    const json& q = j.at("question");
    ex.question = q.at("stem").get<std::string>();
    std::vector<std::string> labels;
    for (const auto& c : q.at("choices")) {
      labels.push_back(c.at("label").get<std::string>());
      ex.choices.push_back(c.at("text").get<std::string>());
    }
    if (j.contains("answerKey") && !j.at("answerKey").get<std::string>().empty()) {
      const std::string key = j.at("answerKey").get<std::string>();
      auto it = std::find(labels.begin(), labels.end(), key);
      if (it == labels.end())
        throw LabelError("answer label '" + key + "' matches no choice (line " +
                         std::to_string(line_no) + ")");
      ex.answer_index = static_cast<int>(it - labels.begin());
    }
  } catch (const json::exception&) {
    throw ParseError("malformed record", line_no);
  }
  return ex;
}

// PIQA: {"goal", "sol1", "sol2"}; label file has one 0/1 per line.
MCQExample parse_piqa(const json& j, long line_no) {
  MCQExample ex;
  ex.dataset_tag = DatasetTag::PIQA;
  try {
    ex.id = j.value("id", "piqa-" + std::to_string(line_no));
    ex.question = j.at("goal").get<std::string>();
    ex.choices = {j.at("sol1").get<std::string>(), j.at("sol2").get<std::string>()};
  } catch (const json::exception&) {
    throw ParseError("malformed record", line_no);
  }
  return ex;
}

// SocialIQA: {"context", "question", "answerA".."answerC"}; labels 1..3.
MCQExample parse_socialiqa(const json& j, long line_no) {
  MCQExample ex;
  ex.dataset_tag = DatasetTag::SocialIQA;
  try {
    ex.id = j.value("id", "siqa-" + std::to_string(line_no));
    ex.question = j.at("context").get<std::string>() + " " + j.at("question").get<std::string>();
    ex.choices = {j.at("answerA").get<std::string>(), j.at("answerB").get<std::string>(),
                  j.at("answerC").get<std::string>()};
  } catch (const json::exception&) {
    throw ParseError("malformed record", line_no);
  }
  return ex;
}

std::string labels_path_for(const std::string& data_path) {
  std::string stem = data_path;
  auto pos = stem.rfind(".jsonl");
  if (pos != std::string::npos) stem = stem.substr(0, pos);
  return stem + "-labels.lst";
}

std::vector<int> read_label_list(const std::string& path, int n_choices, int base) {
  std::ifstream is(path);
  std::vector<int> labels;
  if (!is) return labels;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    int v = 0;
    try {
      v = std::stoi(line);
    } catch (...) {
      throw ParseError("malformed label", line_no);
    }
    v -= base;
    if (v < 0 || v >= n_choices)
      throw LabelError("label out of range in " + path + " (line " + std::to_string(line_no) +
                       ")");
    labels.push_back(v);
  }
  return labels;
}

void validate_example(const MCQExample& ex, long line_no) {
  if (ex.choices.size() < 2) throw SchemaError("example needs at least two choices (line " +
                                               std::to_string(line_no) + ")");
  for (const auto& c : ex.choices)
    if (c.empty())
      throw SchemaError("empty choice text (line " + std::to_string(line_no) + ")");
  if (ex.answer_index.has_value() &&
      (*ex.answer_index < 0 || *ex.answer_index >= static_cast<int>(ex.choices.size())))
    throw LabelError("answer index out of range (line " + std::to_string(line_no) + ")");
}

}  // namespace

std::vector<MCQExample> load_dataset(const std::string& path, DatasetTag tag) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open dataset file: " + path);
  const int want = dataset_choice_count(tag);
  const bool drop_irregular = (tag == DatasetTag::ARC_E || tag == DatasetTag::ARC_C);

  std::vector<MCQExample> out;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_record(line, line_no);
    MCQExample ex;
    switch (tag) {
      case DatasetTag::PIQA: ex = parse_piqa(j, line_no); break;
      case DatasetTag::SocialIQA: ex = parse_socialiqa(j, line_no); break;
      case DatasetTag::SYNTHETIC: throw ArgumentError("synthetic data uses the unified format");
      default: ex = parse_arc_style(j, line_no, tag); break;
    }
    if (want > 0 && static_cast<int>(ex.choices.size()) != want) {
      if (drop_irregular) continue;
      throw SchemaError("expected " + std::to_string(want) + " choices, got " +
                        std::to_string(ex.choices.size()) + " (line " + std::to_string(line_no) +
                        ")");
    }
    validate_example(ex, line_no);
    out.push_back(std::move(ex));
  }

  if (tag == DatasetTag::PIQA || tag == DatasetTag::SocialIQA) {
    const int base = (tag == DatasetTag::SocialIQA) ? 1 : 0;
    std::vector<int> labels = read_label_list(labels_path_for(path), want, base);
    if (!labels.empty()) {
      if (labels.size() != out.size())
        throw SchemaError("labels file does not match data file: " + labels_path_for(path));
      for (std::size_t i = 0; i < out.size(); ++i) out[i].answer_index = labels[i];
    }
  }
  return out;
}

std::vector<MCQExample> read_unified(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open: " + path);
  std::vector<MCQExample> out;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_record(line, line_no);
    MCQExample ex;
    try {
      ex.id = j.at("id").get<std::string>();
      ex.question = j.at("question").get<std::string>();
      ex.choices = j.at("choices").get<std::vector<std::string>>();
      if (j.contains("answer_index") && !j.at("answer_index").is_null())
        ex.answer_index = j.at("answer_index").get<int>();
      ex.dataset_tag = dataset_tag_from_string(j.at("dataset_tag").get<std::string>());
    } catch (const json::exception&) {
      throw ParseError("malformed unified record", line_no);
    }
    validate_example(ex, line_no);
    out.push_back(std::move(ex));
  }
  return out;
}

void write_unified(const std::string& path, const std::vector<MCQExample>& examples) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  for (const auto& ex : examples) {
    json j{{"id", ex.id},
           {"question", ex.question},
           {"choices", ex.choices},
           {"dataset_tag", to_string(ex.dataset_tag)}};
    if (ex.answer_index.has_value())
      j["answer_index"] = *ex.answer_index;
    else
      j["answer_index"] = nullptr;
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("write failed: " + path);
}

DatasetSplits split_in_house_dev(const std::vector<MCQExample>& train, int dev_size,
                                 std::uint64_t seed) {
  if (dev_size <= 0 || dev_size >= static_cast<int>(train.size()))
    throw ArgumentError("dev_size must be in (0, train size)");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<bool> in_dev(train.size(), false);
  for (int i = 0; i < dev_size; ++i) in_dev[order[static_cast<std::size_t>(i)]] = true;

  DatasetSplits out;
  out.provenance = SplitProvenance::IN_HOUSE_DEV;
  for (std::size_t i = 0; i < train.size(); ++i)
    (in_dev[i] ? out.dev : out.train).push_back(train[i]);
  return out;
}

DatasetSplits make_synthetic_dataset(int n_examples, int n_choices, int vocab_size,
                                     std::uint64_t seed) {
  if (n_choices < 2) throw ArgumentError("synthetic: n_choices must be at least 2");
  if (vocab_size < 2 * n_choices)
    throw ArgumentError("synthetic: vocab_size must be at least 2 * n_choices");
  if (n_examples <= 0) throw ArgumentError("synthetic: n_examples must be positive");

  // Partition the vocabulary into common / nuance / filler pools.
  std::vector<std::string> words;
  words.reserve(static_cast<std::size_t>(vocab_size));
  for (int i = 0; i < vocab_size; ++i) words.push_back("w" + std::to_string(i));
  const int n_common = std::clamp(vocab_size / 4, 1, 3);
  const int remainder = vocab_size - n_common;
  const int n_nuance = std::max(n_choices, remainder / 2);
  const int n_filler = remainder - n_nuance;
  if (n_filler < 1) throw ArgumentError("synthetic: vocabulary too small to partition");
  auto common_word = [&](int i) { return words[static_cast<std::size_t>(i)]; };
  auto nuance_word = [&](int i) { return words[static_cast<std::size_t>(n_common + i)]; };
  auto filler_word = [&](int i) {
    return words[static_cast<std::size_t>(n_common + n_nuance + i)];
  };

  Rng rng(seed);

  // Exactly balanced gold labels, order shuffled.
  std::vector<int> golds(static_cast<std::size_t>(n_examples));
  for (int i = 0; i < n_examples; ++i) golds[static_cast<std::size_t>(i)] = i % n_choices;
  rng.shuffle(golds);

  std::vector<MCQExample> all;
  all.reserve(static_cast<std::size_t>(n_examples));
  for (int e = 0; e < n_examples; ++e) {
    // n distinct nuance tokens for this example.
    std::vector<int> pool(static_cast<std::size_t>(n_nuance));
    std::iota(pool.begin(), pool.end(), 0);
    rng.shuffle(pool);
    pool.resize(static_cast<std::size_t>(n_choices));

    const int gold = golds[static_cast<std::size_t>(e)];
    MCQExample ex;
    ex.dataset_tag = DatasetTag::SYNTHETIC;
    ex.id = "syn-" + std::to_string(e);

    // Question: filler, one common token, the gold nuance, filler.
    std::ostringstream q;
    q << filler_word(static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n_filler)))) << ' '
      << common_word(static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n_common)))) << ' '
      << nuance_word(pool[static_cast<std::size_t>(gold)]) << ' '
      << filler_word(static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n_filler))));
    ex.question = q.str();

    for (int c = 0; c < n_choices; ++c) {
      std::ostringstream a;
      for (int k = 0; k < n_common; ++k) a << common_word(k) << ' ';
      a << nuance_word(pool[static_cast<std::size_t>(c)]);
      ex.choices.push_back(a.str());
    }
    ex.answer_index = gold;
    all.push_back(std::move(ex));
  }

  // 80/10/10 split by position (generation order is already random).
  const int n_dev = n_examples / 10;
  const int n_test = n_examples / 10;
  const int n_train = n_examples - n_dev - n_test;
  DatasetSplits out;
  out.provenance = SplitProvenance::IN_HOUSE_DEV;
  out.train.assign(all.begin(), all.begin() + n_train);
  out.dev.assign(all.begin() + n_train, all.begin() + n_train + n_dev);
  out.test.assign(all.begin() + n_train + n_dev, all.end());
  return out;
}

int in_house_dev_size(DatasetTag tag) {
  switch (tag) {
    case DatasetTag::CSQA: return 1241;
    case DatasetTag::QASC: return 814;
    case DatasetTag::PIQA: return 1613;
    case DatasetTag::SocialIQA: return 1910;
    default: return 0;
  }
}

bool uses_in_house_dev(DatasetTag tag) { return in_house_dev_size(tag) > 0; }

DatasetFiles default_dataset_files(DatasetTag tag) {
  switch (tag) {
    case DatasetTag::CSQA: return {"train_rand_split.jsonl", "dev_rand_split.jsonl", ""};
    case DatasetTag::OBQA: return {"train.jsonl", "dev.jsonl", "test.jsonl"};
    case DatasetTag::ARC_E:
      return {"ARC-Easy-Train.jsonl", "ARC-Easy-Dev.jsonl", "ARC-Easy-Test.jsonl"};
    case DatasetTag::ARC_C:
      return {"ARC-Challenge-Train.jsonl", "ARC-Challenge-Dev.jsonl", "ARC-Challenge-Test.jsonl"};
    case DatasetTag::QASC: return {"train.jsonl", "dev.jsonl", ""};
    case DatasetTag::PIQA: return {"train.jsonl", "valid.jsonl", ""};
    case DatasetTag::SocialIQA: return {"train.jsonl", "dev.jsonl", ""};
    case DatasetTag::SYNTHETIC: return {"", "", ""};
  }
  throw ArgumentError("unknown dataset tag");
}

DatasetSplits prepare_dataset(DatasetTag tag, const std::string& data_dir, std::uint64_t seed) {
  if (tag == DatasetTag::SYNTHETIC)
    throw ArgumentError("synthetic data is generated, not prepared from files");
  DatasetFiles files = default_dataset_files(tag);
  auto path = [&](const std::string& f) { return data_dir + "/" + f; };

  std::vector<MCQExample> train = load_dataset(path(files.train), tag);
  std::vector<MCQExample> dev = load_dataset(path(files.dev), tag);

  if (uses_in_house_dev(tag)) {
    // Official test labels unreleased: the official dev set becomes the
    // test split, and the dev split is held out of the training set.
    DatasetSplits out = split_in_house_dev(train, in_house_dev_size(tag), seed);
    out.test = std::move(dev);
    return out;
  }

  DatasetSplits out;
  out.provenance = SplitProvenance::OFFICIAL;
  out.train = std::move(train);
  out.dev = std::move(dev);
  out.test = load_dataset(path(files.test), tag);
  return out;
}

}  // namespace dcqa
