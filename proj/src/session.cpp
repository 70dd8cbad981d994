#include "memrec/session.hpp"

#include <atomic>
#include <cctype>
#include <chrono>
#include <regex>

#include "memrec/error.hpp"
#include "memrec/text.hpp"

namespace memrec {

namespace {

constexpr auto kIcase = std::regex::ECMAScript | std::regex::icase;

const std::vector<std::regex>& request_patterns() {
  static const std::vector<std::regex> patterns = {
      std::regex(R"(\b(recommend|recommendation|recommendations|suggest|suggestion|suggestions)\b)", kIcase),
      std::regex(R"(\bwhat should i (watch|read|see)\b)", kIcase),
      std::regex(R"(\bwhat to (watch|read)\b)", kIcase),
      std::regex(R"(\bwhat (movie|film|book|novel)s? (should|could|would|to)\b)", kIcase),
      std::regex(R"(\b(any|some) (good |great |new )?(movie|film|book|novel)s?\b.*\?)", kIcase),
      std::regex(R"(\blooking for (a|an|some) )", kIcase),
      std::regex(R"(\b(something|anything) (like|similar to)\b)", kIcase),
      std::regex(R"(\bfind me\b)", kIcase),
      std::regex(R"(\bwould i (like|enjoy|love)\b)", kIcase),
      std::regex(R"(\bhow (would|will|might) i (rate|like|enjoy)\b)", kIcase),
  };
  return patterns;
}

const std::vector<std::regex>& preference_patterns() {
  static const std::vector<std::regex> patterns = {
      std::regex(R"(\bi('d| would| will)? (rate|rated|give|gave|score|scored)\b)", kIcase),
      std::regex(R"(\d(\.\d+)?\s*(/|out of)\s*(5|five)\b)", kIcase),
      std::regex(R"(\b\d(\.\d+)?\s*stars?\b)", kIcase),
      std::regex(R"(\bi (just |finally |recently |really |also )?(watched|saw|read|finished|loved|liked|hated|disliked|enjoyed)\b)", kIcase),
      std::regex(R"(\bmy rating\b)", kIcase),
  };
  return patterns;
}

struct GenreAlias {
  std::regex pattern;
  const char* label;
};

const std::vector<GenreAlias>& genre_aliases() {
  static const std::vector<GenreAlias> aliases = [] {
    const std::pair<const char*, const char*> table[] = {
        {R"(\b(sci-?fi|science[- ]fiction)\b)", "Sci-Fi"},
        {R"(\b(film[- ]noir|noir)\b)", "Film-Noir"},
        {R"(\bnon-?fiction\b)", "Nonfiction"},
        {R"(\baction\b)", "Action"},
        {R"(\badventures?\b)", "Adventure"},
        {R"(\b(animation|animated|cartoons?)\b)", "Animation"},
        {R"(\b(children's|childrens|kids|family)\b)", "Children's"},
        {R"(\b(comedy|comedies|rom-com)\b)", "Comedy"},
        {R"(\bcrime\b)", "Crime"},
        {R"(\b(documentary|documentaries)\b)", "Documentary"},
        {R"(\b(drama|dramas)\b)", "Drama"},
        {R"(\bfantasy\b)", "Fantasy"},
        {R"(\bhorror\b)", "Horror"},
        {R"(\bmusicals?\b)", "Musical"},
        {R"(\b(mystery|mysteries)\b)", "Mystery"},
        {R"(\b(romance|romantic|rom-com)\b)", "Romance"},
        {R"(\bthrillers?\b)", "Thriller"},
        {R"(\bwar\b)", "War"},
        {R"(\bwesterns?\b)", "Western"},
        {R"(\b(biography|biographies|memoirs?)\b)", "Biography"},
        {R"(\b(history|historical)\b)", "History"},
        {R"(\bpoetry\b)", "Poetry"},
        {R"(\bself-help\b)", "Self-Help"},
    };
    std::vector<GenreAlias> out;
    for (const auto& [pattern, label] : table) out.push_back({std::regex(pattern, kIcase), label});
    return out;
  }();
  return aliases;
}

bool any_match(const std::vector<std::regex>& patterns, const std::string& text) {
  for (const auto& p : patterns) {
    if (std::regex_search(text, p)) return true;
  }
  return false;
}

bool mentions_books(const std::string& text) {
  static const std::regex pattern(R"(\b(read|reading|book|books|novel|novels)\b)", kIcase);
  return std::regex_search(text, pattern);
}

struct TitleSpan {
  std::string title;
  std::size_t end = 0;  // offset just past the title (and closing quote)
};

// First "..." or curly-quoted span.
std::optional<TitleSpan> quoted_title(const std::string& text) {
  static const std::pair<std::string_view, std::string_view> kQuotes[] = {
      {"\"", "\""}, {"\xE2\x80\x9C", "\xE2\x80\x9D"}};
  std::optional<TitleSpan> best;
  std::size_t best_pos = std::string::npos;
  for (const auto& [open, close] : kQuotes) {
    const auto start = text.find(open);
    if (start == std::string::npos || start >= best_pos) continue;
    const auto stop = text.find(close, start + open.size());
    if (stop == std::string::npos) continue;
    auto title = trim(std::string_view(text).substr(start + open.size(), stop - start - open.size()));
    if (title.empty()) continue;
    best = TitleSpan{std::move(title), stop + close.size()};
    best_pos = start;
  }
  return best;
}

std::string clean_title(std::string title) {
  static const std::regex lead(R"(^(the (movie|film|book|novel)|movie|film|book|novel)\s+)", kIcase);
  title = std::regex_replace(trim(title), lead, "");
  while (!title.empty() && std::string_view(",.;:!?-").find(title.back()) != std::string_view::npos) {
    title.pop_back();
  }
  return trim(title);
}

bool is_pronoun(const std::string& s) {
  static const std::regex pattern(R"(^(it|this|that|this one|that one|them|these|those)$)", kIcase);
  return std::regex_match(s, pattern);
}

GenreList genres_from_list(std::string_view inner) {
  std::vector<std::string> labels;
  for (const auto& part : split(inner, ',')) {
    const auto label = trim(part);
    if (label.empty()) continue;
    const auto known = detect_genres(label);
    if (known.size() == 1) {
      labels.push_back(known.front());
    } else {
      labels.push_back(label);
    }
  }
  return canonical_genres(labels);
}

// A "(Genre, Genre)" list directly after the title.
std::optional<GenreList> genre_list_after(const std::string& text, std::size_t pos) {
  while (pos < text.size() && text[pos] == ' ') ++pos;
  if (pos >= text.size() || text[pos] != '(') return std::nullopt;
  const auto close = text.find(')', pos);
  if (close == std::string::npos) return std::nullopt;
  auto genres = genres_from_list(std::string_view(text).substr(pos + 1, close - pos - 1));
  if (genres.empty()) return std::nullopt;
  return genres;
}

std::optional<double> explicit_rating(const std::string& text) {
  static const std::regex pattern(
      R"((^|[^\d.\-])(\d+(?:\.\d+)?)\s*(?:/\s*(?:5|five)\b|out of\s*(?:5|five)\b|stars?\b))", kIcase);
  std::smatch m;
  if (!std::regex_search(text, m, pattern)) return std::nullopt;
  const double value = std::strtod(m[2].str().c_str(), nullptr);
  if (value < 1.0 || value > 5.0) return std::nullopt;
  return value;
}

std::optional<double> sentiment_rating(const std::string& text) {
  static const std::pair<std::regex, double> table[] = {
      {std::regex(R"(\b(hated|terrible|awful|worst)\b)", kIcase), 1.0},
      {std::regex(R"(\b(disliked|didn't like|did not like|boring|bad)\b)", kIcase), 2.0},
      {std::regex(R"(\b(loved|amazing|masterpiece|fantastic|favorite|favourite)\b)", kIcase), 5.0},
      {std::regex(R"(\b(liked|enjoyed|good|great)\b)", kIcase), 4.0},
      {std::regex(R"(\b(okay|ok|fine|average|decent)\b)", kIcase), 3.0},
  };
  for (const auto& [pattern, rating] : table) {
    if (std::regex_search(text, pattern)) return rating;
  }
  return std::nullopt;
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

char query_type_letter(QueryType type) {
  switch (type) {
    case QueryType::A: return 'A';
    case QueryType::B: return 'B';
    case QueryType::C: return 'C';
  }
  return 'C';
}

QueryType classify_by_rules(std::string_view query) {
  const std::string text(query);
  if (any_match(request_patterns(), text)) return QueryType::A;
  if (any_match(preference_patterns(), text)) return QueryType::B;
  return QueryType::C;
}

std::optional<QueryType> parse_query_type(std::string_view reply) {
  static const std::regex labelled(R"(\btype\s*([abc])\b)", kIcase);
  const std::string text(reply);
  std::smatch m;
  std::string letter;
  if (std::regex_search(text, m, labelled)) {
    letter = m[1].str();
  } else {
    for (const char c : text) {
      if (std::isalnum(static_cast<unsigned char>(c))) letter.push_back(c);
    }
  }
  if (letter.size() != 1) return std::nullopt;
  switch (std::toupper(static_cast<unsigned char>(letter.front()))) {
    case 'A': return QueryType::A;
    case 'B': return QueryType::B;
    case 'C': return QueryType::C;
    default: return std::nullopt;
  }
}

Classification classify_query(std::string_view query, Gateway& gateway,
                              const PromptBuilder& prompts) {
  if (trim(query).empty()) throw Error(ErrorCode::empty_query, "query must not be empty");
  CompletionRequest request;
  request.bundle = prompts.build_detection_prompt(query);
  request.max_reply_tokens = 4;
  request.tag = "session/detect";
  try {
    const auto result = gateway.complete(request);
    if (const auto type = parse_query_type(result.text)) return {*type, false};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::provider_unavailable && e.code() != ErrorCode::replay_exhausted) throw;
  }
  return {classify_by_rules(query), true};
}

GenreList detect_genres(std::string_view text) {
  const std::string s(text);
  std::vector<std::pair<std::ptrdiff_t, std::string>> found;
  for (const auto& alias : genre_aliases()) {
    std::smatch m;
    if (std::regex_search(s, m, alias.pattern)) found.emplace_back(m.position(0), alias.label);
  }
  std::stable_sort(found.begin(), found.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> labels;
  for (auto& [_, label] : found) labels.push_back(std::move(label));
  return canonical_genres(labels);
}

std::string item_id_for_title(std::string_view title) {
  std::string slug;
  bool dash = false;
  for (char c : to_lower_ascii(title)) {
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      if (dash && !slug.empty()) slug.push_back('-');
      slug.push_back(c);
      dash = false;
    } else {
      dash = true;
    }
  }
  if (slug.empty()) slug = hex64(fnv1a64(title));
  return "title:" + slug;
}

std::optional<ExtractedRating> extract_rating_statement(std::string_view text_view) {
  const std::string text(text_view);
  std::optional<TitleSpan> span = quoted_title(text);
  std::optional<double> rating;

  if (!span) {
    static const std::regex rate_pattern(
        R"(\b(?:rate|rated|rating|give|gave|score|scored)\s+(.+?)\s+(?:a\s+|an\s+)?(\d+(?:\.\d+)?)\s*(?:/\s*(?:5|five)\b|out of\s*(?:5|five)\b|stars?\b)?)",
        kIcase);
    std::smatch m;
    if (std::regex_search(text, m, rate_pattern)) {
      auto title = clean_title(m[1].str());
      const auto paren = title.find('(');
      if (paren != std::string::npos) title = trim(title.substr(0, paren));
      if (!title.empty() && !is_pronoun(title)) {
        span = TitleSpan{title, static_cast<std::size_t>(m.position(1)) + m[1].length()};
        const double value = std::strtod(m[2].str().c_str(), nullptr);
        // a stated score outside the scale is refused, not reinterpreted
        if (value < 1.0 || value > 5.0) return std::nullopt;
        rating = value;
      }
    }
  }
  if (!span) {
    static const std::regex watched_pattern(
        R"(\b(?:watched|saw|seen|read|finished|loved|liked|hated|disliked|enjoyed)\s+(.+?)(?=\s+(?:and|but|which|yesterday|today|tonight|last|again|it|so)\b|[,.;!?(]|$))",
        kIcase);
    std::smatch m;
    if (std::regex_search(text, m, watched_pattern)) {
      auto title = clean_title(m[1].str());
      if (!title.empty() && !is_pronoun(title)) {
        span = TitleSpan{title, static_cast<std::size_t>(m.position(1)) + m[1].length()};
      }
    }
  }
  if (!span) return std::nullopt;

  const auto rest = text.substr(std::min(span->end, text.size()));
  if (!rating) rating = explicit_rating(rest);
  if (!rating) {
    try {
      rating = parse_rating_reply(rest);
    } catch (const Error&) {
    }
  }
  if (!rating) rating = sentiment_rating(text);
  if (!rating) return std::nullopt;

  ExtractedRating out;
  out.title = span->title;
  out.rating = *rating;
  if (auto listed = genre_list_after(text, span->end)) {
    out.genres = std::move(*listed);
  } else {
    out.genres = detect_genres(rest);
  }
  out.domain = mentions_books(text) ? Domain::book() : Domain::movie();
  return out;
}

std::optional<TargetItem> extract_request_target(std::string_view text_view) {
  const std::string text(text_view);
  TargetItem target;
  if (auto quoted = quoted_title(text)) {
    target.title = quoted->title;
  } else {
    static const std::regex like_pattern(
        R"(\b(?:like|similar to)\s+(.+?)(?=[,.;!?]|\s+(?:but|and|for|please)\b|$))", kIcase);
    std::smatch m;
    if (std::regex_search(text, m, like_pattern)) {
      auto title = clean_title(m[1].str());
      if (!is_pronoun(title) && detect_genres(title).empty()) target.title = std::move(title);
    }
  }
  target.genres = detect_genres(text);
  target.domain = mentions_books(text) ? Domain::book() : Domain::movie();
  if (target.title.empty() && target.genres.empty()) return std::nullopt;
  target.item_id = target.title.empty() ? "request" : item_id_for_title(target.title);
  return target;
}

std::optional<ExtractedRating> parse_extraction_reply(std::string_view reply) {
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    return std::nullopt;
  }
  try {
    const auto doc = nlohmann::json::parse(reply.substr(open, close - open + 1));
    ExtractedRating out;
    out.title = clean_title(doc.at("title").get<std::string>());
    out.genres = canonical_genres(doc.value("genres", std::vector<std::string>{}));
    out.domain = Domain::parse(doc.value("domain", "movie"));
    const auto& rating = doc.at("rating");
    out.rating = rating.is_number() ? rating.get<double>()
                                    : parse_rating_reply(rating.get<std::string>());
    if (out.title.empty() || out.rating < 1.0 || out.rating > 5.0) return std::nullopt;
    return out;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

nlohmann::ordered_json to_json(const SessionEvent& event) {
  nlohmann::ordered_json doc;
  doc["event_id"] = event.event_id;
  doc["user_id"] = event.user_id;
  doc["query_text"] = event.query_text;
  doc["classified_type"] = std::string(1, query_type_letter(event.classified_type));
  doc["classification_fallback"] = event.classification_fallback;
  doc["response_text"] = event.response_text;
  doc["memory_used"] = nlohmann::ordered_json::array();
  for (const auto& m : event.memory_used) doc["memory_used"].push_back(to_json(m));
  doc["target"] = event.target ? to_json(*event.target) : nlohmann::ordered_json(nullptr);
  doc["stored_record"] =
      event.stored_record ? to_json(*event.stored_record) : nlohmann::ordered_json(nullptr);
  doc["profile_revision_before"] = event.profile_revision_before;
  doc["profile_revision_after"] = event.profile_revision_after;
  doc["received_at_ms"] = event.received_at_ms;
  doc["completed_at_ms"] = event.completed_at_ms;
  doc["ack_fallback"] = event.ack_fallback;
  if (event.error_code) {
    doc["error"] = {{"code", *event.error_code}, {"message", event.error_message.value_or("")}};
  } else {
    doc["error"] = nullptr;
  }
  return doc;
}

SessionEngine::SessionEngine(ProfileStore& store, Gateway& gateway, PromptBuilder prompts,
                             SessionConfig config)
    : store_(store), gateway_(gateway), prompts_(std::move(prompts)), config_(std::move(config)) {
  if (!config_.clock) {
    config_.clock = [] {
      return std::chrono::duration_cast<std::chrono::seconds>(
                 std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
}

std::shared_ptr<std::mutex> SessionEngine::user_mutex(const std::string& user_id) {
  std::lock_guard lock(registry_mutex_);
  auto& slot = user_mutexes_[user_id];
  if (!slot) slot = std::make_shared<std::mutex>();
  return slot;
}

SessionEvent SessionEngine::handle_query(const std::string& user_id,
                                         const std::string& query_text) {
  if (user_id.empty()) throw Error(ErrorCode::validation, "user_id must not be empty");
  if (trim(query_text).empty()) throw Error(ErrorCode::empty_query, "query must not be empty");

  const auto guard = user_mutex(user_id);
  std::lock_guard lock(*guard);
  store_.create_profile(user_id);

  SessionEvent event;
  event.user_id = user_id;
  event.query_text = query_text;
  event.received_at_ms = now_ms();
  {
    std::lock_guard registry(registry_mutex_);
    event.event_id = "evt-" + std::to_string(next_event_++);
  }
  event.profile_revision_before = store_.revision(user_id);

  if (config_.llm_classification) {
    const auto c = classify_query(query_text, gateway_, prompts_);
    event.classified_type = c.type;
    event.classification_fallback = c.used_fallback;
  } else {
    event.classified_type = classify_by_rules(query_text);
    event.classification_fallback = true;
  }

  switch (event.classified_type) {
    case QueryType::A: handle_recommendation(event); break;
    case QueryType::B: handle_update(event); break;
    case QueryType::C: handle_passthrough(event); break;
  }
  event.profile_revision_after = store_.revision(user_id);
  event.completed_at_ms = now_ms();
  return event;
}

void SessionEngine::handle_recommendation(SessionEvent& event) {
  const auto target = extract_request_target(event.query_text);
  if (!target) {
    event.error_code = std::string(error_code_name(ErrorCode::extraction_failed));
    event.error_message = "could not find a title or genre in the request";
    event.response_text = "Tell me a genre or a title you have in mind and I will look through your history.";
    return;
  }
  event.target = target;
  const auto records = store_.read_profile(event.user_id, config_.retrieval.domain_filter);
  event.memory_used = retrieve_memory(records, *target, config_.retrieval);

  CompletionRequest request;
  request.bundle = prompts_.build_session_recommendation_prompt(event.query_text, *target,
                                                                event.memory_used);
  request.max_reply_tokens = config_.max_reply_tokens;
  request.tag = "session/recommend";
  request.context.user_id = event.user_id;
  request.context.target_genres = target->genres;
  for (const auto& m : event.memory_used) request.context.shown_ratings.push_back(m.record.rating);
  event.response_text = gateway_.complete(request).text;
}

std::optional<ExtractedRating> SessionEngine::extract(std::string_view text) {
  if (config_.extraction == ExtractionMode::patterns) return extract_rating_statement(text);
  CompletionRequest request;
  request.bundle = prompts_.build_extraction_prompt(text);
  request.max_reply_tokens = 128;
  request.tag = "session/extract";
  try {
    return parse_extraction_reply(gateway_.complete(request).text);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::provider_unavailable && e.code() != ErrorCode::replay_exhausted) throw;
    return std::nullopt;
  }
}

void SessionEngine::handle_update(SessionEvent& event) {
  const auto extracted = extract(event.query_text);
  if (!extracted) {
    event.error_code = std::string(error_code_name(ErrorCode::extraction_failed));
    event.error_message = "could not find an item and a rating in the message";
    event.response_text = "I could not tell which title you rated. Try: I rate \"Title\" 4/5.";
    return;
  }
  InteractionRecord record;
  record.item_id = item_id_for_title(extracted->title);
  record.title = extracted->title;
  record.domain = extracted->domain;
  record.genres = extracted->genres;
  record.rating = extracted->rating;
  record.timestamp = config_.clock();
  record.record_id = "s" + std::to_string(event.profile_revision_before + 1) + "-" +
                     hex64(fnv1a64(record.item_id + "@" + std::to_string(record.timestamp))).substr(0, 8);
  try {
    store_.append_record(event.user_id, record);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::duplicate_record && e.code() != ErrorCode::validation) throw;
    event.error_code = std::string(error_code_name(e.code()));
    event.error_message = e.what();
    event.response_text = "That rating was not stored: " + std::string(e.what());
    return;
  }
  event.stored_record = record;

  CompletionRequest request;
  request.bundle = prompts_.build_update_ack_prompt(record);
  request.max_reply_tokens = 64;
  request.tag = "session/update_ack";
  request.context.user_id = event.user_id;
  try {
    event.response_text = gateway_.complete(request).text;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::provider_unavailable && e.code() != ErrorCode::replay_exhausted) throw;
    event.ack_fallback = true;
    event.response_text = "Saved: " + record.title + " rated " + format_number(record.rating) + "/5.";
  }
}

void SessionEngine::handle_passthrough(SessionEvent& event) {
  CompletionRequest request;
  request.bundle = prompts_.build_passthrough_prompt(event.query_text);
  request.max_reply_tokens = config_.max_reply_tokens;
  request.tag = "session/passthrough";
  request.context.user_id = event.user_id;
  event.response_text = gateway_.complete(request).text;
}

}  // namespace memrec
