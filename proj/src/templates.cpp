#include "mvk/templates.hpp"

#include <cassert>

namespace mvk {

ExpectedFormat expected_format_for(TaskKind task) {
  switch (task) {
    case TaskKind::VqaOpen:
    case TaskKind::ReportGen: return ExpectedFormat::FreeText;
    case TaskKind::VqaClosed:
    case TaskKind::Classification: return ExpectedFormat::OptionChoice;
    case TaskKind::Detect2D: return ExpectedFormat::BoxToken2D;
    case TaskKind::Detect3D: return ExpectedFormat::BracketBox3D;
    case TaskKind::Landmark: return ExpectedFormat::BracketPoint;
  }
  throw Error("unmapped task kind");
}

namespace {

std::string image_prefix(const Sample& s) {
  std::string out;
  for (size_t i = 0; i < s.image_refs.size(); ++i) out += "<image> ";
  return out;
}

std::string join_options(const std::vector<std::string>& options) {
  std::string out;
  for (size_t i = 0; i < options.size(); ++i) {
    if (i) out += "\n";
    out += options[i];
  }
  return out;
}

std::string user_text(const Sample& s, const TokenConfig& tokens) {
  switch (s.task) {
    case TaskKind::VqaOpen:
      return image_prefix(s) + "given the image, please provide a brief answer to " + s.question;
    case TaskKind::VqaClosed:
    case TaskKind::Classification:
      return image_prefix(s) + "given the image, choose one option from the " +
             join_options(*s.options) + " to answer: " + s.question;
    case TaskKind::ReportGen:
      return image_prefix(s) +
             "given the image, please review the image and create a report that assesses any "
             "abnormalities.";
    case TaskKind::Detect2D:
      return "Find " + tokens.object_ref_start.front() + s.question +
             tokens.object_ref_end.front() + " in this image.";
    case TaskKind::Detect3D:
      return "Find the " + s.question + ", please respond with a 3D bounding box.";
    case TaskKind::Landmark:
      return image_prefix(s) + "given the image, find the " + s.question +
             ", the response is given in the format of [x,y].";
  }
  throw Error("unmapped task kind");
}

}  // namespace

RenderedInstruction render(const Sample& s, const TokenConfig& tokens) {
  RenderedInstruction r;
  r.sample_id = s.id;
  r.messages.push_back({"user", user_text(s, tokens)});
  r.image_slots = count_image_slots(r.messages.back().text);
  r.expected_format = expected_format_for(s.task);
  return r;
}

std::string render_label(const GroundTruth& gt, const std::vector<std::string>* options,
                         const TokenConfig& tokens) {
  if (const auto* t = std::get_if<TextAnswer>(&gt)) return t->text;
  if (const auto* c = std::get_if<ChoiceAnswer>(&gt)) {
    if (!options || c->index < 0 || c->index >= static_cast<int>(options->size()))
      throw Error("choice label requires the sample's options");
    return (*options)[c->index];
  }
  if (const auto* b = std::get_if<Box2D>(&gt)) {
    return tokens.box_start.front() + "(" + std::to_string(b->x1) + "," + std::to_string(b->y1) +
           "),(" + std::to_string(b->x2) + "," + std::to_string(b->y2) + ")" +
           tokens.box_end.front();
  }
  if (const auto* b3 = std::get_if<Box3D>(&gt)) {
    return "[(" + std::to_string(b3->x1) + "," + std::to_string(b3->y1) + "," +
           std::to_string(b3->z1) + "),(" + std::to_string(b3->x2) + "," +
           std::to_string(b3->y2) + "," + std::to_string(b3->z2) + ")]";
  }
  const auto& lp = std::get<LandmarkPoints>(gt);
  if (lp.points.size() != 1)
    throw Error("landmark label is defined for exactly one landmark per sample");
  const Point2D& p = lp.points.front().point;
  return "[" + format_number(p.x) + "," + format_number(p.y) + "]";
}

std::string render_label_for(const Sample& s, const TokenConfig& tokens) {
  return render_label(s.ground_truth, s.options ? &*s.options : nullptr, tokens);
}

ChatFormat chat_format_from_string(const std::string& s) {
  if (s == "messages") return ChatFormat::Messages;
  if (s == "plain") return ChatFormat::Plain;
  throw ConfigError("unknown chat format: " + s + " (expected messages|plain)");
}

int count_image_slots(std::string_view text) {
  static constexpr std::string_view kSlot = "<image>";
  int n = 0;
  size_t pos = 0;
  while ((pos = text.find(kSlot, pos)) != std::string_view::npos) {
    ++n;
    pos += kSlot.size();
  }
  return n;
}

std::string flatten_prompt(const RenderedInstruction& r) {
  std::string out;
  for (size_t i = 0; i < r.messages.size(); ++i) {
    if (i) out += "\n";
    out += r.messages[i].text;
  }
  return out;
}

json encode_rendered(const RenderedInstruction& r, ChatFormat format) {
  json j;
  j["sample_id"] = r.sample_id;
  if (format == ChatFormat::Messages) {
    json msgs = json::array();
    for (const auto& m : r.messages) msgs.push_back({{"role", m.role}, {"text", m.text}});
    j["messages"] = std::move(msgs);
  } else {
    j["prompt"] = flatten_prompt(r);
  }
  j["expected_format"] = to_string(r.expected_format);
  return j;
}

RenderedInstruction decode_rendered(const json& j) {
  RenderedInstruction r;
  r.sample_id = j.at("sample_id").get<std::string>();
  if (j.contains("messages")) {
    for (const auto& m : j["messages"])
      r.messages.push_back({m.at("role").get<std::string>(), m.at("text").get<std::string>()});
  } else if (j.contains("prompt")) {
    r.messages.push_back({"user", j["prompt"].get<std::string>()});
  } else {
    throw SchemaError("rendered record needs messages or prompt");
  }
  int slots = 0;
  for (const auto& m : r.messages) slots += count_image_slots(m.text);
  r.image_slots = slots;
  r.expected_format = expected_format_from_string(j.at("expected_format").get<std::string>());
  return r;
}

}  // namespace mvk
