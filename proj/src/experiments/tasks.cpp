#include "attnforge/experiments/tasks.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "attnforge/encoder.hpp"
#include "attnforge/errors.hpp"

namespace attnforge {

std::string_view task_name(Task task) {
  switch (task) {
    case Task::Copy: return "copy";
    case Task::Reversal: return "reversal";
    case Task::MlmSynthetic: return "mlm-synthetic";
    case Task::ToyClassify: return "toy-classify";
  }
  throw ContractError("unknown task");
}

Task parse_task(std::string_view name) {
  if (name == "copy") return Task::Copy;
  if (name == "reversal") return Task::Reversal;
  if (name == "mlm-synthetic") return Task::MlmSynthetic;
  if (name == "toy-classify") return Task::ToyClassify;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected copy, reversal, mlm-synthetic or toy-classify)");
}

void TaskSpec::validate() const {
  if (seq_len == 0) throw ConfigError("task sequence length must be positive");
  if ((task == Task::Copy || task == Task::Reversal) && seq_len % 2 != 0) {
    throw ConfigError("copy and reversal tasks need an even sequence length");
  }
  if (vocab < static_cast<std::size_t>(kFirstDataToken) + 2) throw ConfigError("vocabulary too small for data tokens");
  if (task == Task::ToyClassify) {
    if (num_classes < 2) throw ConfigError("toy-classify needs at least two classes");
    if (vocab - kFirstDataToken < num_classes) throw ConfigError("fewer data tokens than classes");
    if (!(class_signal >= 0.0 && class_signal <= 1.0)) throw ConfigError("class_signal must lie in [0, 1]");
  }
}

namespace {

std::int32_t data_token(const TaskSpec& spec, Rng& rng) {
  return kFirstDataToken + static_cast<std::int32_t>(rng.below(spec.vocab - kFirstDataToken));
}

/// Successor table for mlm-synthetic; fixed per vocabulary size.
std::vector<std::int32_t> successor_table(std::size_t vocab) {
  const std::size_t data = vocab - kFirstDataToken;
  std::vector<std::int32_t> perm(data);
  std::iota(perm.begin(), perm.end(), kFirstDataToken);
  Rng rng(0x5EED, vocab);
  for (std::size_t i = data; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm;
}

}  // namespace

Example sample_example(const TaskSpec& spec, Rng& rng) {
  spec.validate();
  Example ex;
  const std::size_t n = spec.seq_len;
  ex.tokens.resize(n);
  switch (spec.task) {
    case Task::Copy:
    case Task::Reversal: {
      const std::size_t half = n / 2;
      for (std::size_t i = 0; i < half; ++i) ex.tokens[i] = data_token(spec, rng);
      for (std::size_t i = 0; i < half; ++i) {
        ex.tokens[half + i] = spec.task == Task::Copy ? ex.tokens[i] : ex.tokens[half - 1 - i];
      }
      break;
    }
    case Task::MlmSynthetic: {
      const auto next = successor_table(spec.vocab);
      ex.tokens[0] = data_token(spec, rng);
      for (std::size_t i = 1; i < n; ++i) ex.tokens[i] = next[ex.tokens[i - 1] - kFirstDataToken];
      break;
    }
    case Task::ToyClassify: {
      const std::size_t classes = spec.num_classes;
      ex.label = static_cast<std::int32_t>(rng.below(classes));
      // Group c holds the data tokens t with (t - first) % classes == c.
      const std::size_t data = spec.vocab - kFirstDataToken;
      const std::size_t group_size = (data - static_cast<std::size_t>(ex.label) + classes - 1) / classes;
      for (auto& t : ex.tokens) {
        if (rng.uniform() < spec.class_signal) {
          t = kFirstDataToken + static_cast<std::int32_t>(ex.label + classes * rng.below(group_size));
        } else {
          t = data_token(spec, rng);
        }
      }
      break;
    }
  }
  return ex;
}

std::vector<Example> sample_examples(const TaskSpec& spec, std::size_t count, Rng& rng) {
  std::vector<Example> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_example(spec, rng));
  return out;
}

}  // namespace attnforge
