#include "cfpo/meta.hpp"

namespace cfpo {

std::string components_description() {
  return "- Task Instruction: defines the primary goal and guides the model's overall behavior.\n"
         "- Task Detail: offers supplementary task-specific information, including resolution steps.\n"
         "- Output Format: specifies the desired output structure.\n"
         "- Few-shot Examples (EXAMPLES): provide specific instances for contextual learning.\n"
         "- Query: the question or request to be answered by the model.";
}

std::string render_meta_header(const MetaContext& ctx, const templates::Store& store) {
  return store.render(templates::kHeader,
                      {{"TASK INTENTION", ctx.task_intention},
                       {"DESCRIPTION OF COMPONENTS", components_description()},
                       {"CURRENT PROMPT", ctx.current_prompt}});
}

}  // namespace cfpo
