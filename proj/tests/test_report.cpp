#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "five/error.hpp"
#include "five/report.hpp"
#include "five/rng.hpp"

namespace five {
namespace {

namespace fs = std::filesystem;

const std::array<std::string, kFieldCount> kQuestions = {
    "What is the differentiation of the lesion?",
    "Is there any indication of spread through air spaces around the lesion?",
    "Is there any indication of vascular invasion by the lesion?",
    "Is there any indication of pleural invasion by the lesion?",
    "Is there any evidence of the lesion invading adjacent tissues or organs?",
    "Are the margins of the excised tissue clear of disease?",
};

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("five_report_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

FineGrainedDescription from_codes(const std::array<std::uint8_t, kFieldCount>& codes) {
  FineGrainedDescription d;
  for (std::size_t f = 0; f < kFieldCount; ++f) d.set_verdict(f, codes[f]);
  return d;
}

TEST(Verdicts, NamesRoundTrip) {
  for (std::size_t f = 0; f < kFieldCount; ++f)
    for (std::uint8_t c = 0; c < verdict_count(f); ++c) EXPECT_EQ(verdict_from_name(f, verdict_name(f, c)), c);
  EXPECT_EQ(verdict_count(0), 6u);
  EXPECT_EQ(verdict_count(5), 3u);
  EXPECT_THROW(verdict_from_name(0, "Sometimes"), ParseError);
}

TEST(RenderParse, ExhaustiveRoundTripOverAllVerdictCombinations) {
  std::size_t combos = 0;
  std::array<std::uint8_t, kFieldCount> codes{};
  for (codes[0] = 0; codes[0] < 6; ++codes[0])
    for (codes[1] = 0; codes[1] < 3; ++codes[1])
      for (codes[2] = 0; codes[2] < 3; ++codes[2])
        for (codes[3] = 0; codes[3] < 3; ++codes[3])
          for (codes[4] = 0; codes[4] < 3; ++codes[4])
            for (codes[5] = 0; codes[5] < 3; ++codes[5]) {
              const FineGrainedDescription d = from_codes(codes);
              const ParsedAnswer p = parse_answer(render_description(d));
              ASSERT_TRUE(same_verdicts(p.description, d)) << render_description(d);
              ASSERT_TRUE(p.warnings.none()) << render_description(d);
              ++combos;
            }
  EXPECT_EQ(combos, 6u * 81u * 3u);
}

TEST(RenderParse, RationalesSurviveRoundTrip) {
  FineGrainedDescription d;
  d.vascular_invasion = Presence::Absent;
  d.rationale[2] = "as angiolymphatic invasion is absent";
  d.margins = Margin::Clear;
  d.rationale[5] = "(R0)";
  const std::string text = render_description(d);
  EXPECT_EQ(text,
            "Unknown; Unknown; No indication of vascular invasion by the lesion, as angiolymphatic invasion is "
            "absent; Unknown; Unknown; Margins of the excised tissue are clear of disease (R0).");
  EXPECT_EQ(parse_answer(text).description, d);
}

TEST(RenderParse, AllUnknown) {
  EXPECT_EQ(render_description(FineGrainedDescription{}), "Unknown; Unknown; Unknown; Unknown; Unknown; Unknown.");
  const ParsedAnswer p = parse_answer("Unknown; Unknown; Unknown; Unknown; Unknown; Unknown.");
  EXPECT_EQ(p.description, FineGrainedDescription{});
  EXPECT_TRUE(p.warnings.none());
}

// Published standardized descriptions.
TEST(ParseAnswer, PublishedDescriptionPoorlyDifferentiated) {
  const ParsedAnswer p = parse_answer(
      "Differentiation of the lesion is poorly differentiated; Unknown; No indication of vascular invasion by the "
      "lesion; No indication of pleural invasion by the lesion, as no visceral pleural invasion is seen; Unknown; "
      "Margins of the excised tissue are clear of disease (R0).");
  const auto& d = p.description;
  EXPECT_EQ(d.differentiation, Differentiation::Poor);
  EXPECT_EQ(d.air_space_spread, Presence::Unknown);
  EXPECT_EQ(d.vascular_invasion, Presence::Absent);
  EXPECT_EQ(d.pleural_invasion, Presence::Absent);
  EXPECT_EQ(d.adjacent_invasion, Presence::Unknown);
  EXPECT_EQ(d.margins, Margin::Clear);
  EXPECT_EQ(d.rationale[3], "as no visceral pleural invasion is seen");
  EXPECT_EQ(d.rationale[5], "(R0)");
  EXPECT_TRUE(p.warnings.none());
}

TEST(ParseAnswer, PublishedDescriptionPleuralInvasionPresent) {
  const ParsedAnswer p = parse_answer(
      "Lesion differentiation is moderately differentiated; Unknown; No indication of vascular invasion by the "
      "lesion, as vascular margins are uninvolved by invasive carcinoma; Pleural invasion by the lesion is present; "
      "Unknown; Margins of the excised tissue are clear of disease, as all margins are uninvolved by invasive "
      "carcinoma.");
  EXPECT_EQ(p.description.differentiation, Differentiation::Moderate);
  EXPECT_EQ(p.description.pleural_invasion, Presence::Present);
  EXPECT_EQ(p.description.margins, Margin::Clear);
  EXPECT_EQ(p.description.rationale[5], "as all margins are uninvolved by invasive carcinoma");
}

TEST(ParseAnswer, PublishedDescriptionWithRationales) {
  const ParsedAnswer p = parse_answer(
      "Lesion differentiation is moderately differentiated; Unknown; No indication of vascular invasion by the "
      "lesion, as angiolymphatic invasion is absent; No indication of pleural invasion by the lesion, as visceral "
      "pleural involvement is absent; Unknown; Margins of the excised tissue are clear of disease, as the bronchial "
      "margins are uninvolved.");
  EXPECT_EQ(p.description.vascular_invasion, Presence::Absent);
  EXPECT_EQ(p.description.pleural_invasion, Presence::Absent);
  EXPECT_EQ(p.description.margins, Margin::Clear);
  EXPECT_TRUE(p.warnings.none());
}

TEST(ParseAnswer, PublishedAssistantAnswers) {
  ParsedAnswer a = parse_answer(
      "Moderately differentiated; Unknown; Unknown; Pleural invasion indicated due to tumor extent to visceral "
      "pleura; Unknown; Unknown.");
  EXPECT_EQ(a.description.differentiation, Differentiation::Moderate);
  EXPECT_EQ(a.description.pleural_invasion, Presence::Present);

  ParsedAnswer b = parse_answer(
      "Lesion is grade 1 (of 4), indicating well-differentiated; Unknown; Unknown; Unknown; The lesion is confined to "
      "the kidney, indicating no invasion of adjacent tissues or organs; Margins of the excised tissue are clear of "
      "disease (free by 0.2 cm).");
  EXPECT_EQ(b.description.differentiation, Differentiation::Well);
  EXPECT_EQ(b.description.adjacent_invasion, Presence::Absent);
  EXPECT_EQ(b.description.margins, Margin::Clear);

  ParsedAnswer c = parse_answer(
      "Lesion differentiation is poorly differentiated (G3 of 4); Unknown; Unknown; Pleural invasion by the lesion is "
      "present, as the carcinoma extends into but not through the pleura; Unknown; Margins of the excised tissue are "
      "clear of disease (R0).");
  EXPECT_EQ(c.description.differentiation, Differentiation::Poor);
  EXPECT_EQ(c.description.rationale[0], "(G3 of 4)");
  EXPECT_EQ(c.description.pleural_invasion, Presence::Present);
  for (const auto* p : {&a, &b, &c}) EXPECT_TRUE(p->warnings.none());
}

TEST(RenderDescription, PublishedModerateToPoorExample) {
  FineGrainedDescription d;
  d.differentiation = Differentiation::ModerateToPoor;
  d.vascular_invasion = Presence::Absent;
  d.pleural_invasion = Presence::Absent;
  d.margins = Margin::Clear;
  EXPECT_EQ(render_description(d),
            "Lesion differentiation is moderately to poorly differentiated; Unknown; No indication of vascular invasion "
            "by the lesion; No indication of pleural invasion by the lesion; Unknown; Margins of the excised tissue "
            "are clear of disease.");
}

TEST(ParseAnswer, LongestPhraseWins) {
  const ParsedAnswer p = parse_answer("Moderately to poorly differentiated; Unknown; Unknown; Unknown; Unknown; Unknown");
  EXPECT_EQ(p.description.differentiation, Differentiation::ModerateToPoor);
  const ParsedAnswer q = parse_answer("Unknown; Unknown; Unknown; Unknown; Unknown; Margins are not clear of disease");
  EXPECT_EQ(q.description.margins, Margin::Involved);
}

TEST(ParseAnswer, MarginCodes) {
  auto margin = [](const std::string& seg) {
    return parse_answer("Unknown; Unknown; Unknown; Unknown; Unknown; " + seg).description.margins;
  };
  EXPECT_EQ(margin("R0"), Margin::Clear);
  EXPECT_EQ(margin("R1"), Margin::Involved);
  EXPECT_EQ(margin("R2"), Margin::Involved);
  EXPECT_EQ(margin("Rx"), Margin::Unknown);
}

TEST(ParseAnswer, WrongSegmentCountIsAnError) {
  EXPECT_THROW(parse_answer("Unknown; Unknown; Unknown"), ParseError);
  EXPECT_THROW(parse_answer("Unknown; Unknown; Unknown; Unknown; Unknown; Unknown; Unknown."), ParseError);
  try {
    parse_answer("only one segment");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("only one segment"), std::string::npos);
  }
}

TEST(ParseAnswer, UnclassifiableSegmentDegradesToUnknownWithWarning) {
  const ParsedAnswer p = parse_answer(
      "The weather was pleasant; Unknown; Unknown; Unknown; Unknown; Margins of the excised tissue are clear of "
      "disease.");
  EXPECT_EQ(p.description.differentiation, Differentiation::Unknown);
  EXPECT_TRUE(p.warnings.test(0));
  EXPECT_EQ(p.warnings.count(), 1u);
  EXPECT_EQ(p.description.margins, Margin::Clear);
}

TEST(Template, ShippedFileMatchesBuiltIn) {
  const PromptTemplate file = load_template(fs::path(FIVE_SOURCE_DIR) / "data" / "prompt_template_v1.json");
  const PromptTemplate& tmpl = default_template();
  EXPECT_EQ(file.version, tmpl.version);
  EXPECT_EQ(file.preamble, tmpl.preamble);
  EXPECT_EQ(file.questions, tmpl.questions);
  EXPECT_EQ(file.hints, tmpl.hints);
  ASSERT_EQ(file.examples.size(), tmpl.examples.size());
  for (std::size_t i = 0; i < file.examples.size(); ++i) {
    EXPECT_EQ(file.examples[i].report, tmpl.examples[i].report);
    EXPECT_EQ(file.examples[i].answer, tmpl.examples[i].answer);
  }
  EXPECT_EQ(file.report_line, tmpl.report_line);
}

TEST(Template, QuestionsAreTheFixedSix) { EXPECT_EQ(default_template().questions, kQuestions); }

TEST(Template, ExampleAnswersParseCleanly) {
  for (const auto& ex : default_template().examples) EXPECT_TRUE(parse_answer(ex.answer).warnings.none()) << ex.answer;
}

TEST(Template, MalformedFileIsAValidationError) {
  const fs::path dir = temp_dir("bad_template");
  std::ofstream(dir / "t.json") << R"({"version": "v1", "preamble": "x", "questions": ["a"], "hints": []})";
  EXPECT_THROW(load_template(dir / "t.json"), ValidationError);
  std::ofstream(dir / "u.json") << R"({"version": 3})";
  EXPECT_THROW(load_template(dir / "u.json"), ValidationError);
}

TEST(BuildQuery, ContainsQuestionsAndReport) {
  RawReport r{"r1", ReportStyle::Narrative, "The tumor is well differentiated."};
  const std::string q = build_query(r, default_template());
  for (const auto& question : kQuestions) EXPECT_NE(q.find(question), std::string::npos) << question;
  EXPECT_NE(q.find("Diagnostic report: The tumor is well differentiated."), std::string::npos);
  EXPECT_NE(q.find("Examples:"), std::string::npos);
  EXPECT_EQ(q, build_query(r, default_template()));
}

TEST(BuildQuery, QuestionsAppearInOrder) {
  const std::string q = build_query(RawReport{"r", ReportStyle::Checklist, "body"}, default_template());
  std::size_t pos = 0;
  for (std::size_t i = 0; i < kFieldCount; ++i) {
    const std::size_t next = q.find(std::to_string(i + 1) + ". " + kQuestions[i], pos);
    ASSERT_NE(next, std::string::npos);
    pos = next;
  }
}

TEST(BuildQuery, NoExamplesSectionWithoutExamples) {
  PromptTemplate t = default_template();
  t.examples.clear();
  const std::string q = build_query(RawReport{"r", ReportStyle::Checklist, "body"}, t);
  EXPECT_EQ(q.find("Examples:"), std::string::npos);
  EXPECT_EQ(q.find("Answer:"), std::string::npos);
}

class MockTest : public ::testing::TestWithParam<ReportStyle> {};

TEST_P(MockTest, RecoversGroundTruthForRandomDescriptions) {
  Rng rng(hash_string(style_name(GetParam())));
  MockStandardizer mock(3);
  for (int i = 0; i < 400; ++i) {
    FineGrainedDescription truth;
    for (std::size_t f = 0; f < kFieldCount; ++f)
      truth.set_verdict(f, static_cast<std::uint8_t>(rng.uniform_index(verdict_count(f))));
    const RawReport r = make_report("bag-" + std::to_string(i), truth, GetParam(), rng.next_u64());
    EXPECT_TRUE(same_verdicts(read_report_markers(r), truth)) << r.body;
    const std::string answer = mock.standardize(r, default_template());
    EXPECT_EQ(answer, mock.standardize(r, default_template()));
    const ParsedAnswer p = parse_answer(answer);
    EXPECT_TRUE(p.warnings.none()) << answer;
    EXPECT_TRUE(same_verdicts(p.description, truth)) << r.body << "\n" << answer;
    for (std::size_t f = 0; f < kFieldCount; ++f) {
      if (!truth.is_known(f)) {
        EXPECT_TRUE(p.description.rationale[f].empty());
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(AllStyles, MockTest,
                         ::testing::Values(ReportStyle::Checklist, ReportStyle::Narrative,
                                           ReportStyle::TissueDescription));

TEST(Mock, ChecklistR0GivesClearMargins) {
  FineGrainedDescription truth;
  truth.margins = Margin::Clear;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RawReport r = make_report("m", truth, ReportStyle::Checklist, seed);
    ASSERT_NE(r.body.find("Margins: R0"), std::string::npos) << r.body;
    const std::string answer = MockStandardizer(seed).standardize(r, default_template());
    const std::string last = answer.substr(answer.rfind("; ") + 2);
    EXPECT_EQ(parse_answer(answer).description.margins, Margin::Clear);
    EXPECT_NE(last.find("clear of disease"), std::string::npos) << last;
  }
}

TEST(Mock, MissingDifferentiationGivesUnknownFirstSegment) {
  FineGrainedDescription truth;
  truth.pleural_invasion = Presence::Present;
  const RawReport r = make_report("m", truth, ReportStyle::Narrative, 1);
  const std::string answer = MockStandardizer(2).standardize(r, default_template());
  EXPECT_EQ(answer.substr(0, answer.find(';')), "Unknown");
}

TEST(Mock, PhrasingVariesWithSeedButVerdictsDoNot) {
  FineGrainedDescription truth;
  truth.differentiation = Differentiation::Poor;
  truth.vascular_invasion = Presence::Present;
  truth.margins = Margin::Involved;
  const RawReport r = make_report("v", truth, ReportStyle::TissueDescription, 0);
  std::set<std::string> answers;
  for (std::uint64_t s = 0; s < 30; ++s) {
    const std::string a = MockStandardizer(s).standardize(r, default_template());
    EXPECT_TRUE(same_verdicts(parse_answer(a).description, truth));
    answers.insert(a);
  }
  EXPECT_GT(answers.size(), 1u);
}

TEST(Mock, RejectsReportsWithoutMarkers) {
  RawReport r{"x", ReportStyle::Narrative, "Lobectomy with a well differentiated tumor."};
  MockStandardizer mock;
  EXPECT_THROW(mock.standardize(r, default_template()), ParseError);
  EXPECT_THROW(read_report_markers(r), ParseError);
}

// Counts calls to check that the cache short-circuits them.
class CountingBackend : public StandardizerBackend {
 public:
  std::string standardize(const RawReport& report, const PromptTemplate& tmpl) override {
    ++calls;
    return inner.standardize(report, tmpl);
  }
  MockStandardizer inner{5};
  int calls = 0;
};

TEST(Cache, ReplaysStoredAnswers) {
  const fs::path dir = temp_dir("cache");
  CountingBackend counting;
  FineGrainedDescription truth;
  truth.air_space_spread = Presence::Absent;
  const RawReport r = make_report("c1", truth, ReportStyle::Checklist, 9);
  std::string first;
  {
    CachingStandardizer cache(counting, dir);
    first = cache.standardize(r, default_template());
    EXPECT_EQ(cache.standardize(r, default_template()), first);
    EXPECT_EQ(cache.misses(), 1u);
    EXPECT_EQ(cache.hits(), 1u);
  }
  CachingStandardizer again(counting, dir);
  EXPECT_EQ(again.standardize(r, default_template()), first);
  EXPECT_EQ(counting.calls, 1);

  const std::string key = CachingStandardizer::cache_key(build_query(r, default_template()));
  EXPECT_EQ(key.size(), 16u);
  EXPECT_TRUE(fs::exists(dir / key));
}

TEST(Cache, KeyIsFnv1aOfQuery) {
  // FNV-1a 64 of the empty string is the offset basis.
  EXPECT_EQ(CachingStandardizer::cache_key(""), "cbf29ce484222325");
  EXPECT_EQ(CachingStandardizer::cache_key("a"), "af63dc4c8601ec8c");
}

TEST(Files, CorpusAndDescriptionsRoundTrip) {
  const fs::path dir = temp_dir("files");
  std::vector<RawReport> reports;
  std::vector<DescriptionRecord> records;
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    FineGrainedDescription d;
    for (std::size_t f = 0; f < kFieldCount; ++f) d.set_verdict(f, static_cast<std::uint8_t>(rng.uniform_index(verdict_count(f))));
    if (d.is_known(1)) d.rationale[1] = "quote \" and ; semicolon";
    reports.push_back(make_report("id-" + std::to_string(i), d, static_cast<ReportStyle>(i % 3), 4));
    records.push_back({"id-" + std::to_string(i), d});
  }
  write_corpus(reports, dir / "corpus.jsonl");
  write_descriptions(records, dir / "desc.jsonl");
  const auto back = read_corpus(dir / "corpus.jsonl");
  ASSERT_EQ(back.size(), reports.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].report_id, reports[i].report_id);
    EXPECT_EQ(back[i].style, reports[i].style);
    EXPECT_EQ(back[i].body, reports[i].body);
  }
  const auto dback = read_descriptions(dir / "desc.jsonl");
  ASSERT_EQ(dback.size(), records.size());
  for (std::size_t i = 0; i < dback.size(); ++i) EXPECT_EQ(dback[i].description, records[i].description);
}

TEST(Files, DuplicateReportIdsAreRejected) {
  const fs::path dir = temp_dir("dupes");
  std::vector<RawReport> reports = {make_report("same", FineGrainedDescription{}, ReportStyle::Checklist, 0),
                                    make_report("same", FineGrainedDescription{}, ReportStyle::Narrative, 0)};
  write_corpus(reports, dir / "corpus.jsonl");
  EXPECT_THROW(read_corpus(dir / "corpus.jsonl"), ValidationError);
}

}  // namespace
}  // namespace five
