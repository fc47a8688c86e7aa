#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace five {

inline constexpr std::size_t kFieldCount = 6;

// Canonical field order; matches the order of the six manual prompts.
enum class Field : std::uint8_t {
  Differentiation = 0,
  AirSpaceSpread = 1,
  VascularInvasion = 2,
  PleuralInvasion = 3,
  AdjacentInvasion = 4,
  Margins = 5,
};

// Verdict code 0 is Unknown for every field.
enum class Differentiation : std::uint8_t { Unknown, Well, Moderate, Poor, ModerateToPoor, Mixed };
enum class Presence : std::uint8_t { Unknown, Present, Absent };
enum class Margin : std::uint8_t { Unknown, Clear, Involved };

// Number of verdict codes (including Unknown) for a field.
std::size_t verdict_count(std::size_t field);
std::string_view verdict_name(std::size_t field, std::uint8_t code);
// Inverse of verdict_name; throws ParseError for unknown names.
std::uint8_t verdict_from_name(std::size_t field, std::string_view name);
std::string_view field_name(std::size_t field);

struct FineGrainedDescription {
  Differentiation differentiation = Differentiation::Unknown;
  Presence air_space_spread = Presence::Unknown;
  Presence vascular_invasion = Presence::Unknown;
  Presence pleural_invasion = Presence::Unknown;
  Presence adjacent_invasion = Presence::Unknown;
  Margin margins = Margin::Unknown;
  // Free-text justification per field; empty for Unknown fields.
  std::array<std::string, kFieldCount> rationale;

  std::uint8_t verdict(std::size_t field) const;
  void set_verdict(std::size_t field, std::uint8_t code);
  bool is_known(std::size_t field) const { return verdict(field) != 0; }

  bool operator==(const FineGrainedDescription&) const = default;
};

bool same_verdicts(const FineGrainedDescription& a, const FineGrainedDescription& b);

enum class ReportStyle : std::uint8_t { Checklist, Narrative, TissueDescription };
inline constexpr std::size_t kReportStyleCount = 3;
std::string_view style_name(ReportStyle style);
ReportStyle style_from_name(std::string_view name);

struct RawReport {
  std::string report_id;
  ReportStyle style = ReportStyle::Checklist;
  std::string body;
};

struct AssistantExample {
  std::string report;
  std::string answer;
};

struct PromptTemplate {
  std::string version;
  std::string preamble;
  std::array<std::string, kFieldCount> questions;
  // Extra guidance appended after each question in the extraction query only.
  std::array<std::string, kFieldCount> hints;
  std::vector<AssistantExample> examples;
  // Line carrying the report; "{REPORT}" is replaced by the body.
  std::string report_line;
};

// The versioned template shipped with the repository (data/prompt_template_v1.json
// holds the same content).
const PromptTemplate& default_template();
PromptTemplate load_template(const std::filesystem::path& path);
void save_template(const PromptTemplate& tmpl, const std::filesystem::path& path);

// Full extraction query for one report.
std::string build_query(const RawReport& report, const PromptTemplate& tmpl);

struct ParsedAnswer {
  FineGrainedDescription description;
  // Set for segments that could not be classified (recorded as Unknown).
  std::bitset<kFieldCount> warnings;
};

// Splits a semicolon-delimited answer into six segments and classifies each.
// Throws ParseError when the segment count is not six.
ParsedAnswer parse_answer(std::string_view text);

// Canonical sentence for one field ("Unknown" for unknown fields), with the
// rationale appended when present.
std::string render_field(const FineGrainedDescription& d, std::size_t field);
// "<field 0>; <field 1>; ...; <field 5>."
std::string render_description(const FineGrainedDescription& d);

// Synthetic report surrogate carrying structured markers for every known
// field. The seed varies phrasing only.
RawReport make_report(const std::string& report_id, const FineGrainedDescription& truth,
                      ReportStyle style, std::uint64_t seed);

// Extraction backend. Implementations must return the same answer for the
// same inputs when replay caching is enabled.
class StandardizerBackend {
 public:
  virtual ~StandardizerBackend() = default;
  virtual std::string standardize(const RawReport& report, const PromptTemplate& tmpl) = 0;
};

// Deterministic rule-based stand-in for the external model. Recovers the
// ground truth from the markers written by make_report and phrases each
// answer with seeded variation. Throws ParseError for reports without
// synthetic markers.
class MockStandardizer : public StandardizerBackend {
 public:
  explicit MockStandardizer(std::uint64_t seed = 0) : seed_(seed) {}
  std::string standardize(const RawReport& report, const PromptTemplate& tmpl) override;

 private:
  std::uint64_t seed_;
};

// Recovers the ground truth encoded in a synthetic report.
FineGrainedDescription read_report_markers(const RawReport& report);

// Replay cache in front of another backend. Answers are stored as files
// named by the 64-bit hash of the query (16 hex digits).
class CachingStandardizer : public StandardizerBackend {
 public:
  CachingStandardizer(StandardizerBackend& inner, std::filesystem::path cache_dir);
  std::string standardize(const RawReport& report, const PromptTemplate& tmpl) override;

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }
  static std::string cache_key(std::string_view query);

 private:
  StandardizerBackend& inner_;
  std::filesystem::path cache_dir_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

#ifdef FIVE_WITH_HTTP_BACKEND
// Chat-completions style HTTP endpoint. Only plain http:// URLs are
// supported; pair with CachingStandardizer for replayability.
class HttpStandardizer : public StandardizerBackend {
 public:
  HttpStandardizer(std::string base_url, std::string path, std::string model,
                   std::string api_key);
  std::string standardize(const RawReport& report, const PromptTemplate& tmpl) override;

 private:
  std::string base_url_, path_, model_, api_key_;
};
#endif

// Line-delimited JSON files.
void write_corpus(const std::vector<RawReport>& reports, const std::filesystem::path& path);
std::vector<RawReport> read_corpus(const std::filesystem::path& path);

struct DescriptionRecord {
  std::string report_id;
  FineGrainedDescription description;
};
void write_descriptions(const std::vector<DescriptionRecord>& records,
                        const std::filesystem::path& path);
std::vector<DescriptionRecord> read_descriptions(const std::filesystem::path& path);

}  // namespace five
