#pragma once

#include <array>
#include <string>

#include "mstage/dataset.hpp"

namespace mstage {

/// A solved example shown in-context: question, options, the model's own
/// reasoning chain and its (gold-verified) final answer.
struct Demonstration {
  std::string item_id;
  std::string question;
  std::array<std::string, 4> options;
  std::string chain_text;
  OptionLabel answer = OptionLabel::A;
};

}  // namespace mstage
