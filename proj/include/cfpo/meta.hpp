#pragma once

#include "cfpo/templates.hpp"

#include <string>

namespace cfpo {

/// Shared context interpolated into every optimizer meta-prompt header.
struct MetaContext {
  std::string task_intention;   // e.g. "solve grade school math word problems"
  std::string current_prompt;   // full rendered prompt under optimization
};

/// Fixed description of the five content components, used in the header.
std::string components_description();

std::string render_meta_header(const MetaContext& ctx,
                               const templates::Store& store = templates::Store::defaults());

}  // namespace cfpo
