#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mvk/core.hpp"

namespace mvk {

// Marker-token aliases for grounded box output. The canonical byte sequences
// follow the backbone's grounding convention; checkpoints with a different
// tokenizer surface can be remapped by adding aliases via config.
struct TokenConfig {
  std::vector<std::string> box_start = {"<|box_start|>"};
  std::vector<std::string> box_end = {"<|box_end|>"};
  std::vector<std::string> object_ref_start = {"<|object_ref_start|>"};
  std::vector<std::string> object_ref_end = {"<|object_ref_end|>"};
};

// Answer normalization: width folding, lowercasing, punctuation stripped to
// spaces (full-width forms included), whitespace runs collapsed, and the
// standalone English articles a/an/the removed. Idempotent.
std::string normalize_answer(std::string_view text);

// Tokens for text metrics: the same folding pipeline but with articles kept.
// Latin script splits on whitespace; CJK characters are single tokens.
std::vector<std::string> metric_tokens(std::string_view text);

// Tokens of the normalized answer (articles removed), same segmentation.
std::vector<std::string> answer_tokens(std::string_view text);

// Grammar extractors. Each scans for the first well-formed occurrence and
// returns ParseFailed{reason} otherwise; box corners are canonicalized to
// min/max order per axis.
ParsedOutput parse_box2d(std::string_view text, const TokenConfig& tokens = {});
ParsedOutput parse_box3d(std::string_view text);
ParsedOutput parse_point(std::string_view text);

// Option matching cascade: (1) normalized exact equality, (2) normalized
// option occurs as a whole-token run inside the normalized text. A tie at
// either level is ParseFailed("ambiguous").
ParsedOutput parse_choice(std::string_view text, const std::vector<std::string>& options);

enum class ExpectedFormat { FreeText, OptionChoice, BoxToken2D, BracketBox3D, BracketPoint };

const char* to_string(ExpectedFormat f);
ExpectedFormat expected_format_from_string(const std::string& s);

// Dispatches on the format the template declared for the sample's task.
// FreeText never fails; the raw text is carried through verbatim.
ParsedOutput parse_prediction(std::string_view raw_text, ExpectedFormat format,
                              const std::vector<std::string>* options,
                              const TokenConfig& tokens = {});

}  // namespace mvk
