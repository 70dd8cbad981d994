#include "memrec/prompting.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "memrec/default_templates.inc"
#include "memrec/error.hpp"
#include "memrec/text.hpp"

namespace memrec {

std::string_view role_name(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

std::string_view purpose_name(Purpose purpose) {
  switch (purpose) {
    case Purpose::detect: return "detect";
    case Purpose::recommend: return "recommend";
    case Purpose::update_ack: return "update_ack";
    case Purpose::baseline_recommend: return "baseline_recommend";
    case Purpose::baseline_update: return "baseline_update";
    case Purpose::passthrough: return "passthrough";
    case Purpose::extract: return "extract";
  }
  return "passthrough";
}

namespace {

constexpr Purpose kAllPurposes[] = {Purpose::detect,          Purpose::recommend,
                                    Purpose::update_ack,      Purpose::baseline_recommend,
                                    Purpose::baseline_update, Purpose::passthrough,
                                    Purpose::extract};

bool is_tag_name(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || c == '_';
  });
}

using Node = PromptTemplate::Node;

std::vector<Node> parse_body(const std::string& template_name, std::string_view body) {
  struct Frame {
    std::string name;
    std::vector<Node> nodes;
  };
  std::vector<Frame> stack(1);
  std::string literal;
  const auto flush = [&] {
    if (literal.empty()) return;
    stack.back().nodes.push_back(Node{Node::Kind::literal, std::move(literal), {}});
    literal.clear();
  };

  std::size_t pos = 0;
  while (pos < body.size()) {
    const auto open = body.find("{{", pos);
    if (open == std::string_view::npos) {
      literal.append(body.substr(pos));
      break;
    }
    literal.append(body.substr(pos, open - pos));
    const auto close = body.find("}}", open + 2);
    const auto inner =
        close == std::string_view::npos ? std::string{} : trim(body.substr(open + 2, close - open - 2));
    const char sigil = inner.empty() ? '\0' : inner.front();
    const auto name = (sigil == '#' || sigil == '/') ? inner.substr(1) : inner;
    if (close == std::string_view::npos || !is_tag_name(name)) {
      literal.append("{{");
      pos = open + 2;
      continue;
    }
    flush();
    if (sigil == '#') {
      stack.push_back(Frame{name, {}});
    } else if (sigil == '/') {
      if (stack.size() < 2 || stack.back().name != name) {
        throw Error(ErrorCode::template_error,
                    template_name + ": unexpected {{/" + name + "}}");
      }
      auto frame = std::move(stack.back());
      stack.pop_back();
      stack.back().nodes.push_back(Node{Node::Kind::block, frame.name, std::move(frame.nodes)});
    } else {
      stack.back().nodes.push_back(Node{Node::Kind::variable, name, {}});
    }
    pos = close + 2;
  }
  flush();
  if (stack.size() != 1) {
    throw Error(ErrorCode::template_error, template_name + ": unclosed {{#" + stack.back().name + "}}");
  }
  return std::move(stack.front().nodes);
}

void collect_placeholders(const std::vector<Node>& nodes, std::set<std::string>& out) {
  for (const auto& n : nodes) {
    if (n.kind == Node::Kind::literal) continue;
    out.insert(n.text);
    collect_placeholders(n.children, out);
  }
}

void render_nodes(const std::string& template_name, const std::vector<Node>& nodes,
                  const TemplateValues& values, std::string& out) {
  for (const auto& n : nodes) {
    if (n.kind == Node::Kind::literal) {
      out += n.text;
      continue;
    }
    const auto it = values.find(n.text);
    if (it == values.end()) {
      throw Error(ErrorCode::template_error, template_name + ": no value for {{" + n.text + "}}");
    }
    if (n.kind == Node::Kind::variable) {
      out += it->second;
    } else if (!it->second.empty()) {
      render_nodes(template_name, n.children, values, out);
    }
  }
}

struct TemplateContract {
  std::set<std::string> sections;
  std::set<std::string> placeholders;
};

TemplateContract contract_for(Purpose purpose) {
  switch (purpose) {
    case Purpose::detect: return {{"system", "user"}, {"query"}};
    case Purpose::recommend:
      return {{"system", "user", "request"}, {"domain", "title", "genres", "memory", "query"}};
    case Purpose::update_ack: return {{"system", "user"}, {"domain", "title", "genres", "rating"}};
    case Purpose::baseline_recommend: return {{"system", "query"}, {"domain", "title", "genres"}};
    case Purpose::baseline_update:
      return {{"update", "history"}, {"domain", "title", "genres", "rating"}};
    case Purpose::passthrough: return {{"system", "user"}, {"query"}};
    case Purpose::extract: return {{"system", "user"}, {"query"}};
  }
  return {};
}

}  // namespace

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

std::size_t estimate_tokens(const std::vector<Message>& messages) {
  std::size_t total = 0;
  for (const auto& m : messages) total += estimate_tokens(m.content);
  return total;
}

PromptTemplate PromptTemplate::parse(std::string name, std::string_view text) {
  PromptTemplate t;
  t.name_ = std::move(name);
  t.text_ = std::string(text);

  std::string current;
  std::string body;
  bool in_section = false;
  const auto close_section = [&] {
    if (!in_section) return;
    while (!body.empty() && body.back() == '\n') body.pop_back();
    if (t.sections_.count(current) > 0) {
      throw Error(ErrorCode::template_error, t.name_ + ": section @" + current + " defined twice");
    }
    t.sections_.emplace(current, parse_body(t.name_ + "@" + current, body));
    body.clear();
  };

  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const auto line = raw.size() > 0 && raw.back() == '\r' ? raw.substr(0, raw.size() - 1) : raw;
    if (!line.empty() && line.front() == '@' && is_tag_name(std::string_view(line).substr(1))) {
      close_section();
      current = line.substr(1);
      in_section = true;
      continue;
    }
    if (!in_section) {
      if (line.empty() || line.front() == '#') continue;
      throw Error(ErrorCode::template_error,
                  t.name_ + ":" + std::to_string(line_no) + ": text outside of a section");
    }
    body += line;
    body += '\n';
  }
  close_section();
  return t;
}

std::string PromptTemplate::hash() const { return hex64(fnv1a64(text_)); }

bool PromptTemplate::has_section(std::string_view section) const {
  return sections_.find(section) != sections_.end();
}

std::set<std::string> PromptTemplate::section_names() const {
  std::set<std::string> out;
  for (const auto& [name, _] : sections_) out.insert(name);
  return out;
}

std::set<std::string> PromptTemplate::placeholders() const {
  std::set<std::string> out;
  for (const auto& [_, nodes] : sections_) collect_placeholders(nodes, out);
  return out;
}

std::string PromptTemplate::render(std::string_view section, const TemplateValues& values) const {
  const auto it = sections_.find(section);
  if (it == sections_.end()) {
    throw Error(ErrorCode::template_error, name_ + ": no section @" + std::string(section));
  }
  std::string out;
  render_nodes(name_, it->second, values, out);
  return out;
}

void validate_template(Purpose purpose, const PromptTemplate& tmpl) {
  const auto contract = contract_for(purpose);
  for (const auto& s : tmpl.section_names()) {
    if (contract.sections.count(s) == 0) {
      throw Error(ErrorCode::template_error, tmpl.name() + ": unknown section @" + s);
    }
  }
  for (const auto& s : contract.sections) {
    if (!tmpl.has_section(s)) {
      throw Error(ErrorCode::template_error, tmpl.name() + ": missing section @" + s);
    }
  }
  for (const auto& p : tmpl.placeholders()) {
    if (contract.placeholders.count(p) == 0) {
      throw Error(ErrorCode::template_error, tmpl.name() + ": unknown placeholder {{" + p + "}}");
    }
  }
}

TemplateSet TemplateSet::builtin() {
  TemplateSet set;
  for (const auto purpose : kAllPurposes) {
    const auto name = purpose_name(purpose);
    const auto* found = std::find_if(std::begin(generated::kTemplates), std::end(generated::kTemplates),
                                     [&](const auto& t) { return name == t.purpose; });
    if (found == std::end(generated::kTemplates)) {
      throw Error(ErrorCode::template_error, "no built-in template for " + std::string(name));
    }
    auto tmpl = PromptTemplate::parse(std::string(name) + ".tmpl", found->text);
    validate_template(purpose, tmpl);
    set.templates_.emplace(purpose, std::move(tmpl));
  }
  return set;
}

TemplateSet TemplateSet::from_directory(const std::filesystem::path& dir) {
  auto set = builtin();
  for (const auto purpose : kAllPurposes) {
    const auto path = dir / (std::string(purpose_name(purpose)) + ".tmpl");
    std::ifstream in(path, std::ios::binary);
    if (!in) continue;
    std::ostringstream buf;
    buf << in.rdbuf();
    auto tmpl = PromptTemplate::parse(path.string(), buf.str());
    validate_template(purpose, tmpl);
    set.templates_.insert_or_assign(purpose, std::move(tmpl));
  }
  return set;
}

const PromptTemplate& TemplateSet::get(Purpose purpose) const { return templates_.at(purpose); }

std::map<std::string, std::string> TemplateSet::hashes() const {
  std::map<std::string, std::string> out;
  for (const auto& [purpose, tmpl] : templates_) out[std::string(purpose_name(purpose))] = tmpl.hash();
  return out;
}

PromptBuilder::PromptBuilder(TemplateSet templates, PromptOptions options)
    : templates_(std::move(templates)), options_(options) {}

PromptBundle PromptBuilder::finish(Purpose purpose, std::vector<Message> messages) const {
  PromptBundle bundle;
  bundle.purpose = purpose;
  bundle.messages = std::move(messages);
  bundle.token_estimate = estimate_tokens(bundle.messages);
  return bundle;
}

std::string PromptBuilder::tagged(std::string text, const InteractionRecord& record) const {
  if (options_.audit_ids) text += " [id:" + record.record_id + "]";
  return text;
}

std::string PromptBuilder::memory_line(const InteractionRecord& record) const {
  std::string line = record.title;
  if (!record.genres.empty()) line += " (" + join(record.genres, ", ") + ")";
  line += ": rated " + format_number(record.rating) + "/5";
  return tagged(std::move(line), record);
}

PromptBundle PromptBuilder::build_detection_prompt(std::string_view user_query) const {
  if (trim(user_query).empty()) throw Error(ErrorCode::empty_query, "query must not be empty");
  const auto& t = templates_.get(Purpose::detect);
  const TemplateValues values{{"query", std::string(user_query)}};
  return finish(Purpose::detect, {{Role::system, t.render("system", values)},
                                  {Role::user, t.render("user", values)}});
}

namespace {

TemplateValues item_values(const Domain& domain, const std::string& title, const GenreList& genres) {
  return TemplateValues{{"domain", domain.name()},
                        {"title", title},
                        {"genres", join(genres, ", ")}};
}

}  // namespace

PromptBundle PromptBuilder::build_recommendation_prompt(
    const TargetItem& target, const std::vector<ScoredMemory>& memory) const {
  const auto& t = templates_.get(Purpose::recommend);
  auto values = item_values(target.domain, target.title, target.genres);
  std::vector<std::string> lines;
  lines.reserve(memory.size());
  for (const auto& m : memory) lines.push_back(memory_line(m.record));
  values["memory"] = join(lines, "\n");
  values["query"] = "";
  return finish(Purpose::recommend, {{Role::system, t.render("system", values)},
                                     {Role::user, t.render("user", values)}});
}

PromptBundle PromptBuilder::build_session_recommendation_prompt(
    std::string_view user_query, const TargetItem& target,
    const std::vector<ScoredMemory>& memory) const {
  if (trim(user_query).empty()) throw Error(ErrorCode::empty_query, "query must not be empty");
  const auto& t = templates_.get(Purpose::recommend);
  auto values = item_values(target.domain, target.title, target.genres);
  std::vector<std::string> lines;
  for (const auto& m : memory) lines.push_back(memory_line(m.record));
  values["memory"] = join(lines, "\n");
  values["query"] = std::string(user_query);
  return finish(Purpose::recommend, {{Role::system, t.render("system", values)},
                                     {Role::user, t.render("request", values)}});
}

PromptBundle PromptBuilder::build_update_ack_prompt(const InteractionRecord& record) const {
  const auto& t = templates_.get(Purpose::update_ack);
  auto values = item_values(record.domain, record.title, record.genres);
  values["rating"] = format_number(record.rating);
  return finish(Purpose::update_ack, {{Role::system, t.render("system", values)},
                                      {Role::user, t.render("user", values)}});
}

PromptBundle PromptBuilder::build_baseline_messages(const std::vector<InteractionRecord>& history,
                                                    const TargetItem& target,
                                                    BaselineMode mode) const {
  const auto& recommend = templates_.get(Purpose::baseline_recommend);
  const auto& update = templates_.get(Purpose::baseline_update);
  const auto target_values = item_values(target.domain, target.title, target.genres);

  std::vector<Message> messages;
  messages.push_back({Role::system, recommend.render("system", target_values)});
  for (const auto& h : history) {
    auto values = item_values(h.domain, h.title, h.genres);
    values["rating"] = format_number(h.rating);
    if (mode == BaselineMode::single_domain) {
      messages.push_back({Role::user, tagged(recommend.render("query", values), h)});
      messages.push_back({Role::user, tagged(update.render("update", values), h)});
    } else {
      messages.push_back({Role::user, tagged(update.render("history", values), h)});
    }
  }
  messages.push_back({Role::user, recommend.render("query", target_values)});
  return finish(Purpose::baseline_recommend, std::move(messages));
}

PromptBundle PromptBuilder::build_passthrough_prompt(std::string_view user_query) const {
  if (trim(user_query).empty()) throw Error(ErrorCode::empty_query, "query must not be empty");
  const auto& t = templates_.get(Purpose::passthrough);
  const TemplateValues values{{"query", std::string(user_query)}};
  return finish(Purpose::passthrough, {{Role::system, t.render("system", values)},
                                       {Role::user, t.render("user", values)}});
}

PromptBundle PromptBuilder::build_extraction_prompt(std::string_view user_query) const {
  if (trim(user_query).empty()) throw Error(ErrorCode::empty_query, "query must not be empty");
  const auto& t = templates_.get(Purpose::extract);
  const TemplateValues values{{"query", std::string(user_query)}};
  return finish(Purpose::extract, {{Role::system, t.render("system", values)},
                                   {Role::user, t.render("user", values)}});
}

double parse_rating_reply(std::string_view text) {
  const auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
  std::size_t i = 0;
  while (i < text.size()) {
    const bool starts_number =
        is_digit(text[i]) || (text[i] == '.' && i + 1 < text.size() && is_digit(text[i + 1]));
    if (!starts_number) {
      ++i;
      continue;
    }
    const bool negative = i > 0 && text[i - 1] == '-';
    const auto start = i;
    while (i < text.size() && is_digit(text[i])) ++i;
    if (i + 1 < text.size() && text[i] == '.' && is_digit(text[i + 1])) {
      ++i;
      while (i < text.size() && is_digit(text[i])) ++i;
    }
    const double value = std::strtod(std::string(text.substr(start, i - start)).c_str(), nullptr);
    if (!negative && value >= 1.0 && value <= 5.0) return value;
  }
  throw Error(ErrorCode::unparsable_reply, "no rating between 1 and 5 in reply: \"" +
                                               std::string(text.substr(0, 200)) + "\"");
}

std::vector<std::string> audited_record_ids(const PromptBundle& bundle) {
  std::vector<std::string> ids;
  static constexpr std::string_view kOpen = "[id:";
  for (const auto& m : bundle.messages) {
    std::size_t pos = 0;
    while ((pos = m.content.find(kOpen, pos)) != std::string::npos) {
      const auto end = m.content.find(']', pos);
      if (end == std::string::npos) break;
      ids.push_back(m.content.substr(pos + kOpen.size(), end - pos - kOpen.size()));
      pos = end + 1;
    }
  }
  return ids;
}

}  // namespace memrec
