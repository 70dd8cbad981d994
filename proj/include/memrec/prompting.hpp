#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "memrec/record.hpp"
#include "memrec/retrieval.hpp"

namespace memrec {

enum class Role { system, user, assistant };

std::string_view role_name(Role role);

struct Message {
  Role role = Role::user;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

enum class Purpose {
  detect,
  recommend,
  update_ack,
  baseline_recommend,
  baseline_update,
  passthrough,
  extract,
};

std::string_view purpose_name(Purpose purpose);

struct PromptBundle {
  std::vector<Message> messages;
  Purpose purpose = Purpose::passthrough;
  std::size_t token_estimate = 0;
};

// ceil(bytes / 4); 0 only for the empty string.
std::size_t estimate_tokens(std::string_view text);
std::size_t estimate_tokens(const std::vector<Message>& messages);

using TemplateValues = std::map<std::string, std::string, std::less<>>;

// A prompt template file: optional leading '#' comment lines, then sections
// introduced by a line "@<name>". Section bodies use {{name}} placeholders
// and {{#name}}...{{/name}} blocks that render only when the value is
// non-empty. Substituted values are inserted verbatim and never re-scanned.
class PromptTemplate {
 public:
  static PromptTemplate parse(std::string name, std::string_view text);

  const std::string& name() const { return name_; }
  const std::string& text() const { return text_; }
  std::string hash() const;
  bool has_section(std::string_view section) const;
  std::set<std::string> section_names() const;
  std::set<std::string> placeholders() const;

  // Throws template_error for a missing section or value.
  std::string render(std::string_view section, const TemplateValues& values) const;

  struct Node {
    enum class Kind { literal, variable, block } kind = Kind::literal;
    std::string text;  // literal text or placeholder name
    std::vector<Node> children;
  };

 private:
  std::string name_;
  std::string text_;
  std::map<std::string, std::vector<Node>, std::less<>> sections_;
};

// One validated template per purpose.
class TemplateSet {
 public:
  // The templates compiled into the binary (templates/*.tmpl at build time).
  static TemplateSet builtin();
  // Loads <dir>/<purpose>.tmpl where present; other purposes keep the
  // built-in text. Throws template_error on unknown sections/placeholders.
  static TemplateSet from_directory(const std::filesystem::path& dir);

  const PromptTemplate& get(Purpose purpose) const;
  // purpose name -> template hash
  std::map<std::string, std::string> hashes() const;

 private:
  std::map<Purpose, PromptTemplate> templates_;
};

void validate_template(Purpose purpose, const PromptTemplate& tmpl);

struct PromptOptions {
  // Tags every history record shown with " [id:<record_id>]" so tests can
  // audit exactly which records reached a prompt.
  bool audit_ids = false;
};

enum class BaselineMode { single_domain, cross_domain };

class PromptBuilder {
 public:
  explicit PromptBuilder(TemplateSet templates = TemplateSet::builtin(), PromptOptions options = {});

  PromptBundle build_detection_prompt(std::string_view user_query) const;
  PromptBundle build_recommendation_prompt(const TargetItem& target,
                                           const std::vector<ScoredMemory>& memory) const;
  // Live Type A request: same memory block, free-form recommendation.
  PromptBundle build_session_recommendation_prompt(std::string_view user_query,
                                                   const TargetItem& target,
                                                   const std::vector<ScoredMemory>& memory) const;
  PromptBundle build_update_ack_prompt(const InteractionRecord& record) const;
  PromptBundle build_baseline_messages(const std::vector<InteractionRecord>& history,
                                       const TargetItem& target, BaselineMode mode) const;
  PromptBundle build_passthrough_prompt(std::string_view user_query) const;
  PromptBundle build_extraction_prompt(std::string_view user_query) const;

  // "<title> (<genres>): rated <rating>/5"
  std::string memory_line(const InteractionRecord& record) const;

  const TemplateSet& templates() const { return templates_; }
  const PromptOptions& options() const { return options_; }

 private:
  PromptBundle finish(Purpose purpose, std::vector<Message> messages) const;
  std::string tagged(std::string text, const InteractionRecord& record) const;

  TemplateSet templates_;
  PromptOptions options_;
};

// Appended as a follow-up user message when a rating reply cannot be parsed.
inline constexpr std::string_view kRatingRetryInstruction = "Answer with a single number 1-5.";

// First number in [1, 5] scanning left to right. Numbers are digit runs with
// an optional fractional part (or a bare ".5"); a '-' directly in front makes
// a number negative. Throws unparsable_reply when nothing qualifies.
double parse_rating_reply(std::string_view text);

// Record ids tagged into a prompt by PromptOptions::audit_ids.
std::vector<std::string> audited_record_ids(const PromptBundle& bundle);

}  // namespace memrec
