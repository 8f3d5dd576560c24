#pragma once

#include <string>
#include <vector>

#include "mvk/core.hpp"
#include "mvk/parse.hpp"

namespace mvk {

struct Message {
  std::string role;  // "system" | "user"
  std::string text;
  bool operator==(const Message&) const = default;
};

// A template-expanded prompt ready for an inference endpoint.
struct RenderedInstruction {
  std::string sample_id;
  std::vector<Message> messages;
  int image_slots = 0;  // "<image>" placeholders embedded in the text
  ExpectedFormat expected_format = ExpectedFormat::FreeText;
  bool operator==(const RenderedInstruction&) const = default;
};

// The answer grammar is a pure function of the task kind.
ExpectedFormat expected_format_for(TaskKind task);

// Expands the instruction template for the sample's task. Placeholder
// conventions: one "<image>" per image_ref, prepended before the instruction
// body; the detection templates carry the image implicitly and embed none.
// Precondition: validate_sample(s) is empty.
RenderedInstruction render(const Sample& s, const TokenConfig& tokens = {});

// Target-side label text. Choice labels need the sample's options list.
std::string render_label(const GroundTruth& gt,
                         const std::vector<std::string>* options = nullptr,
                         const TokenConfig& tokens = {});
std::string render_label_for(const Sample& s, const TokenConfig& tokens = {});

enum class ChatFormat { Messages, Plain };

ChatFormat chat_format_from_string(const std::string& s);

int count_image_slots(std::string_view text);
std::string flatten_prompt(const RenderedInstruction& r);

// Rendered corpus file codec. Messages format keeps the role-structured
// array; plain format flattens to a single "prompt" string.
json encode_rendered(const RenderedInstruction& r, ChatFormat format = ChatFormat::Messages);
RenderedInstruction decode_rendered(const json& j);

}  // namespace mvk
