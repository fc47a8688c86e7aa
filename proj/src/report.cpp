#include "five/report.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "five/error.hpp"
#include "five/rng.hpp"
#include "json.hpp"

namespace five {
namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, kFieldCount> kFieldNames = {
    "differentiation",   "air_space_spread",  "vascular_invasion",
    "pleural_invasion",  "adjacent_invasion", "margins"};

constexpr std::array<std::string_view, 6> kDifferentiationNames = {
    "Unknown", "Well", "Moderate", "Poor", "ModerateToPoor", "Mixed"};
constexpr std::array<std::string_view, 3> kPresenceNames = {"Unknown", "Present", "Absent"};
constexpr std::array<std::string_view, 3> kMarginNames = {"Unknown", "Clear", "Involved"};

void check_field(std::size_t field) {
  if (field >= kFieldCount) throw ValidationError("field index " + std::to_string(field) + " out of range");
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string strip_trailing_periods(std::string s) {
  s = trim(s);
  while (!s.empty() && s.back() == '.') {
    s.pop_back();
    s = trim(s);
  }
  return s;
}

// Lowercase alphanumeric words.
std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool contains_phrase(const std::vector<std::string>& haystack, const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > haystack.size()) return false;
  for (std::size_t i = 0; i + phrase.size() <= haystack.size(); ++i)
    if (std::equal(phrase.begin(), phrase.end(), haystack.begin() + static_cast<std::ptrdiff_t>(i)))
      return true;
  return false;
}

struct Rule {
  std::string phrase;
  std::vector<std::string> tokens;
  std::uint8_t code;
};

// Keyword rules, longest phrase first so that "moderately to poorly" wins
// over "moderately" and "not clear" over "clear".
std::vector<Rule> make_rules(std::initializer_list<std::pair<const char*, std::uint8_t>> entries) {
  std::vector<Rule> rules;
  for (const auto& [phrase, code] : entries) rules.push_back({phrase, words(phrase), code});
  std::stable_sort(rules.begin(), rules.end(),
                   [](const Rule& a, const Rule& b) { return a.phrase.size() > b.phrase.size(); });
  return rules;
}

const std::vector<Rule>& rules_for(std::size_t field) {
  using D = Differentiation;
  using P = Presence;
  using M = Margin;
  auto c = [](auto e) { return static_cast<std::uint8_t>(e); };
  static const std::vector<Rule> differentiation = make_rules({
      {"moderately to poorly", c(D::ModerateToPoor)},
      {"moderate to poor", c(D::ModerateToPoor)},
      {"grade 2 3", c(D::ModerateToPoor)},
      {"mixed", c(D::Mixed)},
      {"poorly", c(D::Poor)},
      {"poor", c(D::Poor)},
      {"grade 3", c(D::Poor)},
      {"g3", c(D::Poor)},
      {"undifferentiated", c(D::Poor)},
      {"moderately", c(D::Moderate)},
      {"moderate", c(D::Moderate)},
      {"grade 2", c(D::Moderate)},
      {"g2", c(D::Moderate)},
      {"well", c(D::Well)},
      {"grade 1", c(D::Well)},
      {"g1", c(D::Well)},
  });
  static const std::vector<Rule> presence = make_rules({
      {"no indication", c(P::Absent)},
      {"no evidence", c(P::Absent)},
      {"not present", c(P::Absent)},
      {"not identified", c(P::Absent)},
      {"not seen", c(P::Absent)},
      {"absent", c(P::Absent)},
      {"negative", c(P::Absent)},
      {"without", c(P::Absent)},
      {"confined", c(P::Absent)},
      {"none", c(P::Absent)},
      {"no", c(P::Absent)},
      {"not", c(P::Absent)},
      {"is present", c(P::Present)},
      {"present", c(P::Present)},
      {"indicated", c(P::Present)},
      {"identified", c(P::Present)},
      {"invades", c(P::Present)},
      {"invading", c(P::Present)},
      {"involves", c(P::Present)},
      {"positive", c(P::Present)},
  });
  static const std::vector<Rule> margins = make_rules({
      {"not clear", c(M::Involved)},
      {"involved", c(M::Involved)},
      {"positive", c(M::Involved)},
      {"r1", c(M::Involved)},
      {"r2", c(M::Involved)},
      {"uninvolved", c(M::Clear)},
      {"clear", c(M::Clear)},
      {"negative", c(M::Clear)},
      {"free", c(M::Clear)},
      {"r0", c(M::Clear)},
      {"rx", c(M::Unknown)},
  });
  if (field == 0) return differentiation;
  if (field == 5) return margins;
  return presence;
}

// Returns the matched verdict code, or nullopt when nothing matched.
std::optional<std::uint8_t> classify(std::size_t field, std::string_view text) {
  const auto w = words(text);
  for (const Rule& rule : rules_for(field))
    if (contains_phrase(w, rule.tokens)) return rule.code;
  return std::nullopt;
}

// Verdict clause and rationale split at the first ", " or " (".
std::pair<std::string, std::string> split_rationale(const std::string& segment) {
  std::size_t comma = segment.find(", ");
  std::size_t paren = segment.find(" (");
  std::size_t cut = std::min(comma, paren);
  if (cut == std::string::npos) return {segment, ""};
  std::string head = trim(segment.substr(0, cut));
  std::string tail = segment.substr(cut);
  if (tail.rfind(", ", 0) == 0) tail = tail.substr(2);
  return {head, trim(tail)};
}

std::string_view canonical_phrase(std::size_t field, std::uint8_t code) {
  static const std::array<std::string_view, 6> diff = {
      "", "Lesion differentiation is well differentiated",
      "Lesion differentiation is moderately differentiated",
      "Lesion differentiation is poorly differentiated",
      "Lesion differentiation is moderately to poorly differentiated",
      "Lesion differentiation is mixed"};
  static const std::array<std::array<std::string_view, 3>, 4> presence = {{
      {"", "Spread through air spaces around the lesion is present",
       "No indication of spread through air spaces around the lesion"},
      {"", "Vascular invasion by the lesion is present",
       "No indication of vascular invasion by the lesion"},
      {"", "Pleural invasion by the lesion is present",
       "No indication of pleural invasion by the lesion"},
      {"", "The lesion invades adjacent tissues or organs",
       "No evidence of the lesion invading adjacent tissues or organs"},
  }};
  static const std::array<std::string_view, 3> margins = {
      "", "Margins of the excised tissue are clear of disease",
      "Margins of the excised tissue are not clear of disease"};
  if (field == 0) return diff.at(code);
  if (field == 5) return margins.at(code);
  return presence.at(field - 1).at(code);
}

// ---------------------------------------------------------------------------
// Synthetic report markers. A report writes `prefix + token + suffix` for a
// field; the reader looks for the same strings. The first token of a code is
// the one the reader tries first; writers pick any token of the code.

struct MarkerSpec {
  std::string prefix;
  std::string suffix;
  // tokens[code]; an empty list for Unknown means the field is omitted.
  std::vector<std::vector<std::string>> tokens;
};

using StyleMarkers = std::array<MarkerSpec, kFieldCount>;

const StyleMarkers& markers_for(ReportStyle style) {
  static const StyleMarkers checklist = {{
      {"Histologic grade: ", ". ",
       {{"Not specified"}, {"Well differentiated"}, {"Moderately differentiated"},
        {"Poorly differentiated"}, {"Moderately to poorly differentiated"}, {"Mixed differentiation"}}},
      {"Spread through air spaces: ", ". ", {{"Not specified"}, {"Present"}, {"Absent"}}},
      {"Venous invasion: ", ". ", {{"Not specified"}, {"Present"}, {"Absent"}}},
      {"Visceral pleural invasion: ", ". ", {{"Not specified"}, {"Present"}, {"Absent"}}},
      {"Invasion of adjacent structures: ", ". ", {{"Not specified"}, {"Present"}, {"Absent"}}},
      {"Margins: ", ". ", {{"Rx", "Not specified"}, {"R0"}, {"R1", "R2"}}},
  }};
  static const StyleMarkers narrative = {{
      {"The tumor is ", ". ",
       {{}, {"well differentiated"}, {"moderately differentiated"}, {"poorly differentiated"},
        {"moderately to poorly differentiated"}, {"of mixed differentiation"}}},
      {"Tumor spread through air spaces is ", ". ", {{}, {"identified"}, {"not identified"}}},
      {"Lymphovascular invasion is ", ". ", {{}, {"identified"}, {"not identified"}}},
      {"Pleural invasion is ", ". ", {{}, {"identified"}, {"not identified"}}},
      {"Invasion of adjacent organs is ", ". ", {{}, {"identified"}, {"not identified"}}},
      {"The resection margin status is ", ". ", {{"Rx"}, {"R0"}, {"R1", "R2"}}},
  }};
  static const StyleMarkers tissue = {{
      {"DIAGNOSIS: Lung, lobectomy: ", " carcinoma. ",
       {{"Ungraded"}, {"Grade 1 (of 4)"}, {"Grade 2 (of 4)"}, {"Grade 3 (of 4)"},
        {"Grade 2-3 (of 4)"}, {"Mixed grade"}}},
      {"Spread through air spaces: ", ". ", {{}, {"present"}, {"absent"}}},
      {"Angiolymphatic invasion: ", ". ", {{}, {"present"}, {"absent"}}},
      {"Pleural involvement: ", ". ", {{}, {"present"}, {"absent"}}},
      {"Extension into adjacent structures: ", ". ", {{}, {"present"}, {"absent"}}},
      {"Surgical margins: ", ". ",
       {{"not assessed (Rx)"}, {"negative (R0)"}, {"positive (R1)", "positive (R2)"}}},
  }};
  switch (style) {
    case ReportStyle::Checklist: return checklist;
    case ReportStyle::Narrative: return narrative;
    case ReportStyle::TissueDescription: return tissue;
  }
  return checklist;
}

constexpr std::string_view kAccessionMarker = "Accession: SYN-";

std::string marker_sentence(const MarkerSpec& spec, std::uint8_t code, Rng& rng) {
  const auto& tokens = spec.tokens.at(code);
  if (tokens.empty()) return "";
  return spec.prefix + tokens[rng.uniform_index(tokens.size())] + spec.suffix;
}

// Answer phrasing variants used by the mock backend, per field and code.
const std::vector<std::string>& answer_variants(std::size_t field, std::uint8_t code) {
  static const std::vector<std::string> none;
  static const std::array<std::vector<std::vector<std::string>>, kFieldCount> table = {{
      {{},
       {"Lesion differentiation is well differentiated", "Differentiation of the lesion is well differentiated",
        "Lesion differentiation is well differentiated (grade 1 of 4)"},
       {"Lesion differentiation is moderately differentiated",
        "Differentiation of the lesion is moderately differentiated",
        "Lesion differentiation is moderately differentiated (grade 2 of 4)"},
       {"Lesion differentiation is poorly differentiated", "Differentiation of the lesion is poorly differentiated",
        "Lesion differentiation is poorly differentiated (G3 of 4)"},
       {"Lesion differentiation is moderately to poorly differentiated",
        "Differentiation of the lesion is moderately to poorly differentiated"},
       {"Lesion differentiation is mixed", "Differentiation of the lesion is mixed"}},
      {{},
       {"Spread through air spaces around the lesion is present",
        "Spread through air spaces around the lesion is present, as tumor cells are seen in alveolar spaces"},
       {"No indication of spread through air spaces around the lesion",
        "No indication of spread through air spaces around the lesion, as no tumor cells are seen in alveolar spaces"}},
      {{},
       {"Vascular invasion by the lesion is present",
        "Vascular invasion by the lesion is present, as lymphovascular invasion is identified"},
       {"No indication of vascular invasion by the lesion",
        "No indication of vascular invasion by the lesion, as angiolymphatic invasion is absent"}},
      {{},
       {"Pleural invasion by the lesion is present",
        "Pleural invasion by the lesion is present, as the carcinoma extends into the visceral pleura",
        "Pleural invasion indicated due to tumor extent to visceral pleura"},
       {"No indication of pleural invasion by the lesion",
        "No indication of pleural invasion by the lesion, as visceral pleural involvement is absent"}},
      {{},
       {"The lesion invades adjacent tissues or organs",
        "The lesion invades adjacent tissues or organs, as the tumor extends into the chest wall"},
       {"No evidence of the lesion invading adjacent tissues or organs",
        "The lesion is confined to the lung, indicating no invasion of adjacent tissues or organs"}},
      {{},
       {"Margins of the excised tissue are clear of disease",
        "Margins of the excised tissue are clear of disease (R0)",
        "Margins of the excised tissue are clear of disease, as all margins are uninvolved"},
       {"Margins of the excised tissue are not clear of disease",
        "Margins of the excised tissue are not clear of disease, as the tumor is within the bronchial margin"}},
  }};
  check_field(field);
  const auto& per_code = table[field];
  if (code >= per_code.size()) return none;
  return per_code[code];
}

json description_to_json(const FineGrainedDescription& d) {
  json fields = json::array();
  for (std::size_t f = 0; f < kFieldCount; ++f)
    fields.push_back({{"verdict", std::string(verdict_name(f, d.verdict(f)))}, {"rationale", d.rationale[f]}});
  return fields;
}

FineGrainedDescription description_from_json(const json& fields) {
  if (!fields.is_array() || fields.size() != kFieldCount)
    throw ValidationError("description record must carry exactly six fields");
  FineGrainedDescription d;
  for (std::size_t f = 0; f < kFieldCount; ++f) {
    d.set_verdict(f, verdict_from_name(f, fields[f].at("verdict").get<std::string>()));
    if (d.is_known(f)) d.rationale[f] = fields[f].value("rationale", "");
  }
  return d;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::size_t verdict_count(std::size_t field) {
  check_field(field);
  return field == 0 ? kDifferentiationNames.size() : 3;
}

std::string_view verdict_name(std::size_t field, std::uint8_t code) {
  check_field(field);
  if (code >= verdict_count(field)) throw ValidationError("verdict code out of range");
  if (field == 0) return kDifferentiationNames[code];
  if (field == 5) return kMarginNames[code];
  return kPresenceNames[code];
}

std::uint8_t verdict_from_name(std::size_t field, std::string_view name) {
  for (std::uint8_t c = 0; c < verdict_count(field); ++c)
    if (verdict_name(field, c) == name) return c;
  throw ParseError("unknown verdict '" + std::string(name) + "' for field " +
                   std::string(field_name(field)));
}

std::string_view field_name(std::size_t field) {
  check_field(field);
  return kFieldNames[field];
}

std::uint8_t FineGrainedDescription::verdict(std::size_t field) const {
  switch (field) {
    case 0: return static_cast<std::uint8_t>(differentiation);
    case 1: return static_cast<std::uint8_t>(air_space_spread);
    case 2: return static_cast<std::uint8_t>(vascular_invasion);
    case 3: return static_cast<std::uint8_t>(pleural_invasion);
    case 4: return static_cast<std::uint8_t>(adjacent_invasion);
    case 5: return static_cast<std::uint8_t>(margins);
    default: check_field(field);
  }
  return 0;
}

void FineGrainedDescription::set_verdict(std::size_t field, std::uint8_t code) {
  if (code >= verdict_count(field)) throw ValidationError("verdict code out of range");
  switch (field) {
    case 0: differentiation = static_cast<Differentiation>(code); break;
    case 1: air_space_spread = static_cast<Presence>(code); break;
    case 2: vascular_invasion = static_cast<Presence>(code); break;
    case 3: pleural_invasion = static_cast<Presence>(code); break;
    case 4: adjacent_invasion = static_cast<Presence>(code); break;
    case 5: margins = static_cast<Margin>(code); break;
    default: check_field(field);
  }
  if (code == 0) rationale[field].clear();
}

bool same_verdicts(const FineGrainedDescription& a, const FineGrainedDescription& b) {
  for (std::size_t f = 0; f < kFieldCount; ++f)
    if (a.verdict(f) != b.verdict(f)) return false;
  return true;
}

std::string_view style_name(ReportStyle style) {
  switch (style) {
    case ReportStyle::Checklist: return "checklist";
    case ReportStyle::Narrative: return "narrative";
    case ReportStyle::TissueDescription: return "tissue-description";
  }
  return "checklist";
}

ReportStyle style_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kReportStyleCount; ++i) {
    auto s = static_cast<ReportStyle>(i);
    if (style_name(s) == name) return s;
  }
  throw ValidationError("unknown report style '" + std::string(name) + "'");
}

const PromptTemplate& default_template() {
  static const PromptTemplate tmpl = [] {
    PromptTemplate t;
    t.version = "v1";
    t.preamble =
        "Task: fill six fields from the pathology report at the end.\n"
        "Rules:\n"
        "- Answer the questions in order, one answer each, separated by semicolons.\n"
        "- Keep each answer to a short clinical phrase.\n"
        "- Use microscopic findings only; skip gross findings and lymph node results.\n"
        "- If the report says nothing about a question, the answer is exactly \"Unknown.\"";
    t.questions = {
        "What is the differentiation of the lesion?",
        "Is there any indication of spread through air spaces around the lesion?",
        "Is there any indication of vascular invasion by the lesion?",
        "Is there any indication of pleural invasion by the lesion?",
        "Is there any evidence of the lesion invading adjacent tissues or organs?",
        "Are the margins of the excised tissue clear of disease?",
    };
    t.hints = {
        "(For example: well differentiated; moderately differentiated; poorly differentiated; "
        "moderately to poorly differentiated; mixed differentiation.)",
        "Give the reason.",
        "Give the reason.",
        "Give the reason.",
        "Do not count the organ the lesion arises in. Give the reason.",
        "(R0 is negative; R1 and R2 are positive; Rx is Unknown.)",
    };
    t.examples = {
        {"SYNOPTIC SUMMARY. Accession: EXAMPLE-1. Procedure: wedge resection. Grade: moderately "
         "differentiated. Pleura: tumor penetrates the visceral pleura. Margin status: not assessed.",
         "Lesion differentiation is moderately differentiated; Unknown; Unknown; Pleural invasion "
         "by the lesion is present, as the tumor penetrates the visceral pleura; Unknown; Unknown."},
        {"DIAGNOSIS: Lung, lobectomy: Grade 1 (of 4) carcinoma. The tumor is confined to the "
         "lung. Surgical margins: negative (R0).",
         "Lesion differentiation is well differentiated (grade 1 of 4); Unknown; Unknown; "
         "Unknown; The lesion is confined to the lung, indicating no invasion of adjacent tissues "
         "or organs; Margins of the excised tissue are clear of disease (R0)."},
    };
    t.report_line = "Diagnostic report: {REPORT}";
    return t;
  }();
  return tmpl;
}

PromptTemplate load_template(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  PromptTemplate t;
  try {
    t.version = j.at("version").get<std::string>();
    t.preamble = j.at("preamble").get<std::string>();
    auto qs = j.at("questions");
    auto hs = j.at("hints");
    if (qs.size() != kFieldCount || hs.size() != kFieldCount)
      throw ValidationError(path.string() + ": template must have exactly six questions and hints");
    for (std::size_t i = 0; i < kFieldCount; ++i) {
      t.questions[i] = qs[i].get<std::string>();
      t.hints[i] = hs[i].get<std::string>();
    }
    for (const auto& ex : j.at("examples"))
      t.examples.push_back({ex.at("report").get<std::string>(), ex.at("answer").get<std::string>()});
    t.report_line = j.at("report_line").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return t;
}

void save_template(const PromptTemplate& tmpl, const std::filesystem::path& path) {
  json j;
  j["version"] = tmpl.version;
  j["preamble"] = tmpl.preamble;
  j["questions"] = tmpl.questions;
  j["hints"] = tmpl.hints;
  j["examples"] = json::array();
  for (const auto& ex : tmpl.examples) j["examples"].push_back({{"report", ex.report}, {"answer", ex.answer}});
  j["report_line"] = tmpl.report_line;
  write_text_file(path, j.dump(2) + "\n");
}

std::string build_query(const RawReport& report, const PromptTemplate& tmpl) {
  std::string out = tmpl.preamble;
  out += "\n";
  for (std::size_t i = 0; i < kFieldCount; ++i) {
    out += std::to_string(i + 1) + ". " + tmpl.questions[i];
    if (!tmpl.hints[i].empty()) out += " " + tmpl.hints[i];
    out += "\n";
  }
  if (!tmpl.examples.empty()) {
    out += "\nExamples:\n";
    for (const auto& ex : tmpl.examples) {
      out += "Report: " + ex.report + "\n";
      out += "Answer: " + ex.answer + "\n";
    }
  }
  std::string line = tmpl.report_line;
  const std::string placeholder = "{REPORT}";
  if (auto pos = line.find(placeholder); pos != std::string::npos)
    line.replace(pos, placeholder.size(), report.body);
  else
    line += report.body;
  out += "\n" + line + "\n";
  return out;
}

ParsedAnswer parse_answer(std::string_view text) {
  std::string body = strip_trailing_periods(std::string(text));
  std::vector<std::string> segments;
  {
    std::size_t start = 0;
    while (true) {
      std::size_t pos = body.find(';', start);
      segments.push_back(body.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
  }
  if (segments.size() != kFieldCount)
    throw ParseError("malformed answer: expected 6 semicolon-separated segments, got " +
                     std::to_string(segments.size()) + ": \"" + std::string(text) + "\"");

  ParsedAnswer result;
  for (std::size_t f = 0; f < kFieldCount; ++f) {
    std::string segment = strip_trailing_periods(segments[f]);
    auto [head, rationale] = split_rationale(segment);
    if (lower(head) == "unknown") continue;
    std::optional<std::uint8_t> code = classify(f, head);
    if (!code) code = classify(f, segment);
    if (!code) {
      result.warnings.set(f);
      continue;
    }
    result.description.set_verdict(f, *code);
    if (*code != 0) result.description.rationale[f] = rationale;
  }
  return result;
}

std::string render_field(const FineGrainedDescription& d, std::size_t field) {
  const std::uint8_t code = d.verdict(field);
  if (code == 0) return "Unknown";
  std::string out(canonical_phrase(field, code));
  const std::string& r = d.rationale[field];
  if (!r.empty()) out += (r.front() == '(' ? " " : ", ") + r;
  return out;
}

std::string render_description(const FineGrainedDescription& d) {
  std::string out;
  for (std::size_t f = 0; f < kFieldCount; ++f) {
    if (f) out += "; ";
    out += render_field(d, f);
  }
  return out + ".";
}

RawReport make_report(const std::string& report_id, const FineGrainedDescription& truth,
                      ReportStyle style, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, hash_string(report_id), static_cast<std::uint64_t>(style));
  const StyleMarkers& markers = markers_for(style);
  std::vector<std::string> field_sentences;
  for (std::size_t f = 0; f < kFieldCount; ++f)
    field_sentences.push_back(marker_sentence(markers[f], truth.verdict(f), rng));

  static const std::array<std::string_view, 3> specimens = {"Lobectomy", "Wedge resection", "Pneumonectomy"};
  const std::string specimen(specimens[rng.uniform_index(specimens.size())]);
  const std::string size = std::to_string(1 + rng.uniform_index(6)) + " x " +
                           std::to_string(1 + rng.uniform_index(6)) + " x " +
                           std::to_string(1 + rng.uniform_index(5)) + " cm";
  const std::string nodes = std::to_string(rng.uniform_index(3)) + "/" + std::to_string(3 + rng.uniform_index(8));
  const std::string accession = std::string(kAccessionMarker) + report_id + ". ";

  std::string body;
  switch (style) {
    case ReportStyle::Checklist:
      body = "LUNG TISSUE CHECKLIST. " + accession + "Specimen type: " + specimen + ". Tumor size: " + size +
             ". ";
      for (const auto& s : field_sentences) body += s;
      body += "Lymph nodes: " + nodes + " positive for metastasis.";
      break;
    case ReportStyle::Narrative: {
      body = "FINAL DIAGNOSIS. " + accession + "Received is a " + lower(specimen) + " specimen containing a " +
             size + " mass. ";
      // Sentence order varies between reports.
      std::vector<std::size_t> order = {0, 1, 2, 3, 4, 5};
      rng.shuffle(order);
      for (std::size_t f : order) body += field_sentences[f];
      body += nodes + " lymph nodes involved.";
      break;
    }
    case ReportStyle::TissueDescription:
      body = "TISSUE DESCRIPTION: " + specimen + " of lung, " + std::to_string(100 + rng.uniform_index(300)) +
             " grams. " + accession;
      for (const auto& s : field_sentences) body += s;
      body += "Lymph nodes: " + nodes + ".";
      break;
  }
  body = trim(body);
  return RawReport{report_id, style, body};
}

FineGrainedDescription read_report_markers(const RawReport& report) {
  if (report.body.find(kAccessionMarker) == std::string::npos)
    throw ParseError("unsupported report '" + report.report_id + "': no synthetic markers");
  const StyleMarkers& markers = markers_for(report.style);
  FineGrainedDescription d;
  // The body is trimmed, so a trailing ". " may have lost its space.
  const std::string body = report.body + " ";
  for (std::size_t f = 0; f < kFieldCount; ++f) {
    const MarkerSpec& spec = markers[f];
    for (std::uint8_t code = 0; code < spec.tokens.size(); ++code) {
      bool found = false;
      for (const auto& tok : spec.tokens[code])
        if (body.find(spec.prefix + tok + spec.suffix) != std::string::npos) found = true;
      if (found) {
        d.set_verdict(f, code);
        break;
      }
    }
  }
  return d;
}

std::string MockStandardizer::standardize(const RawReport& report, const PromptTemplate& tmpl) {
  (void)tmpl;
  const FineGrainedDescription truth = read_report_markers(report);
  Rng rng = Rng::substream(seed_, hash_string(report.report_id), static_cast<std::uint64_t>(report.style));
  std::string out;
  for (std::size_t f = 0; f < kFieldCount; ++f) {
    if (f) out += "; ";
    const auto& variants = answer_variants(f, truth.verdict(f));
    if (variants.empty())
      out += "Unknown";
    else
      out += variants[rng.uniform_index(variants.size())];
  }
  return out + ".";
}

CachingStandardizer::CachingStandardizer(StandardizerBackend& inner, std::filesystem::path cache_dir)
    : inner_(inner), cache_dir_(std::move(cache_dir)) {
  std::filesystem::create_directories(cache_dir_);
}

std::string CachingStandardizer::cache_key(std::string_view query) {
  static const char* hex = "0123456789abcdef";
  std::uint64_t h = hash_string(query);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xF];
    h >>= 4;
  }
  return out;
}

std::string CachingStandardizer::standardize(const RawReport& report, const PromptTemplate& tmpl) {
  static std::mutex write_mutex;
  const auto path = cache_dir_ / cache_key(build_query(report, tmpl));
  {
    std::ifstream in(path, std::ios::binary);
    if (in) {
      std::stringstream ss;
      ss << in.rdbuf();
      ++hits_;
      return ss.str();
    }
  }
  std::string answer = inner_.standardize(report, tmpl);
  ++misses_;
  std::lock_guard<std::mutex> lock(write_mutex);
  auto tmp = path;
  tmp += ".tmp";
  write_text_file(tmp, answer);
  std::filesystem::rename(tmp, path);
  return answer;
}

void write_corpus(const std::vector<RawReport>& reports, const std::filesystem::path& path) {
  std::string text;
  for (const auto& r : reports) {
    json j = {{"report_id", r.report_id}, {"style", std::string(style_name(r.style))}, {"body", r.body}};
    text += j.dump() + "\n";
  }
  write_text_file(path, text);
}

std::vector<RawReport> read_corpus(const std::filesystem::path& path) {
  std::vector<RawReport> out;
  std::set<std::string> ids;
  for (const auto& j : read_jsonl(path)) {
    RawReport r;
    try {
      r.report_id = j.at("report_id").get<std::string>();
      r.style = style_from_name(j.at("style").get<std::string>());
      r.body = j.at("body").get<std::string>();
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
    if (r.body.empty()) throw ValidationError(path.string() + ": report '" + r.report_id + "' has an empty body");
    if (!ids.insert(r.report_id).second)
      throw ValidationError(path.string() + ": duplicate report id '" + r.report_id + "'");
    out.push_back(std::move(r));
  }
  return out;
}

void write_descriptions(const std::vector<DescriptionRecord>& records, const std::filesystem::path& path) {
  std::string text;
  for (const auto& r : records) {
    json j = {{"report_id", r.report_id}, {"fields", description_to_json(r.description)}};
    text += j.dump() + "\n";
  }
  write_text_file(path, text);
}

std::vector<DescriptionRecord> read_descriptions(const std::filesystem::path& path) {
  std::vector<DescriptionRecord> out;
  for (const auto& j : read_jsonl(path)) {
    try {
      out.push_back({j.at("report_id").get<std::string>(), description_from_json(j.at("fields"))});
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace five
