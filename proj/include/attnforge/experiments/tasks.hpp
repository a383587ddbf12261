#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "attnforge/rng.hpp"

namespace attnforge {

/// Synthetic probes.
///   copy:          second half repeats the first half
///   reversal:      second half is the first half reversed
///   mlm-synthetic: every token determines its successor through a fixed permutation
///   toy-classify:  tokens are biased towards one of `num_classes` token groups; the label is the group
enum class Task { Copy, Reversal, MlmSynthetic, ToyClassify };

std::string_view task_name(Task task);
Task parse_task(std::string_view name);
inline bool is_classification(Task task) { return task == Task::ToyClassify; }

struct TaskSpec {
  Task task = Task::Copy;
  std::size_t seq_len = 16;
  std::size_t vocab = 64;
  std::size_t num_classes = 4;
  /// toy-classify: probability that a token is drawn from the class group.
  double class_signal = 0.25;

  void validate() const;
};

struct Example {
  std::vector<std::int32_t> tokens;
  std::int32_t label = -1;  // class id for toy-classify
};

Example sample_example(const TaskSpec& spec, Rng& rng);
std::vector<Example> sample_examples(const TaskSpec& spec, std::size_t count, Rng& rng);

}  // namespace attnforge
