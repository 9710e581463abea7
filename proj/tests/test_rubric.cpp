#include <catch2/catch_amalgamated.hpp>

#include "perspact/fixtures.hpp"
#include "perspact/narrative.hpp"
#include "perspact/prng.hpp"
#include "perspact/rubric.hpp"

#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace perspact;

TEST_CASE("reference egocentric narrative scores as stage0") {
    const std::string& text = reference_narratives::wardrobe_stage0();
    const CriteriaScores s = score(text);
    REQUIRE(s.pron == PronPattern::stage0_pattern);
    REQUIRE(s.actors == ActorsPattern::self_only);
    REQUIRE(s.self_art);
    REQUIRE_FALSE(s.dir_art);
    REQUIRE_FALSE(s.dir_lim);
    REQUIRE(classify_stage(s) == VerdictStage::stage0);
}

TEST_CASE("reference differentiated narrative scores as stage1 with drawer evidence") {
    const std::string& text = reference_narratives::wardrobe_stage1();
    const RubricAnalysis analysis = analyze(text);
    const CriteriaScores& s = analysis.scores;
    REQUIRE(s.pron == PronPattern::stage1_pattern);
    REQUIRE(s.actors == ActorsPattern::self_and_other);
    REQUIRE(s.self_art);
    REQUIRE(s.dir_art);
    REQUIRE(s.self_lim);
    REQUIRE(s.dir_lim);

    const StageVerdict verdict = classify(analysis);
    REQUIRE(verdict.stage == VerdictStage::stage1);
    REQUIRE_FALSE(verdict.evidence.empty());

    bool found_drawer = false, found_self_limit = false;
    for (const auto& span : verdict.evidence) {
        if (span.criterion == "dir_lim" &&
            span.excerpt == "they can’t see the drawer")
            found_drawer = true;
        if (span.criterion == "self_lim" &&
            span.excerpt == "I don’t know what’s inside")
            found_self_limit = true;
    }
    REQUIRE(found_drawer);
    REQUIRE(found_self_limit);
}

TEST_CASE("evidence offsets point at the exact bytes") {
    const std::string& text = reference_narratives::wardrobe_stage1();
    for (const auto& span : lexicon_judge(text).evidence) {
        REQUIRE(span.end > span.begin);
        REQUIRE(span.end <= text.size());
        REQUIRE(text.substr(span.begin, span.end - span.begin) == span.excerpt);
    }
}

TEST_CASE("degenerate first-person text is stage0-pattern with no flags") {
    const CriteriaScores s = score("I I I.");
    REQUIRE(s.pron == PronPattern::stage0_pattern);
    REQUIRE(s.actors == ActorsPattern::self_only);
    REQUIRE_FALSE(s.self_art);
    REQUIRE_FALSE(s.dir_art);
    REQUIRE_FALSE(s.self_lim);
    REQUIRE_FALSE(s.dir_lim);
}

TEST_CASE("text without first-person reference does not classify") {
    const StageVerdict v = lexicon_judge("hello");
    REQUIRE(v.scores.pron == PronPattern::neither);
    REQUIRE(v.scores.actors == ActorsPattern::neither);
    REQUIRE(v.stage == VerdictStage::unclassified);
}

TEST_CASE("classification rules are conjunctive") {
    CriteriaScores s;
    s.pron = PronPattern::stage1_pattern;
    s.actors = ActorsPattern::self_and_other;
    s.dir_art = false; // missing articulation blocks stage1
    s.dir_lim = true;
    REQUIRE(classify(s).stage == VerdictStage::unclassified);

    s.dir_art = true;
    REQUIRE(classify(s).stage == VerdictStage::stage1);

    s = CriteriaScores{};
    s.pron = PronPattern::stage0_pattern;
    s.actors = ActorsPattern::self_only;
    REQUIRE(classify(s).stage == VerdictStage::stage0);
    s.dir_lim = true;
    REQUIRE(classify(s).stage == VerdictStage::unclassified);
}

TEST_CASE("appending a director-limit sentence flips any stage0 text away from stage0") {
    std::vector<std::string> stage0_texts = {reference_narratives::wardrobe_stage0()};
    for (const auto& name : testsupport::bundled_scenario_names()) {
        stage0_texts.push_back(
            template_narrative(testsupport::load_bundled(name).scene, Stage::stage0).text);
    }
    for (const auto& base : stage0_texts) {
        REQUIRE(lexicon_judge(base).stage == VerdictStage::stage0);
        const std::string extended = base + " They can't see the box.";
        const StageVerdict v = lexicon_judge(extended);
        REQUIRE(v.scores.dir_lim);
        REQUIRE(v.stage != VerdictStage::stage0);
    }
}

TEST_CASE("score is deterministic") {
    const std::string& text = reference_narratives::wardrobe_stage1();
    REQUIRE(score(text) == score(text));
    const auto a = lexicon_judge(text);
    const auto b = lexicon_judge(text);
    REQUIRE(a == b);
}

TEST_CASE("empty text is rejected") {
    REQUIRE_THROWS_AS(score(""), Error);
    REQUIRE_THROWS_AS(score("   \n\t"), Error);
    try {
        score("");
    } catch (const Error& e) {
        REQUIRE(e.kind() == ErrorKind::empty_input);
    }
}

TEST_CASE("confusion matrices count intended vs classified") {
    std::vector<std::pair<Stage, VerdictStage>> perfect;
    for (int i = 0; i < 4; ++i) perfect.emplace_back(Stage::stage0, VerdictStage::stage0);
    for (int i = 0; i < 4; ++i) perfect.emplace_back(Stage::stage1, VerdictStage::stage1);
    const ConfusionMatrix diag = confusion(perfect, Phase::pre_task);
    REQUIRE(diag.at(Stage::stage0, VerdictStage::stage0) == 4);
    REQUIRE(diag.at(Stage::stage1, VerdictStage::stage1) == 4);
    REQUIRE(diag.at(Stage::stage0, VerdictStage::stage1) == 0);
    REQUIRE(diag.total() == 8);

    std::vector<std::pair<Stage, VerdictStage>> skewed(
        6, {Stage::stage0, VerdictStage::stage1});
    const ConfusionMatrix off = confusion(skewed, Phase::post_task);
    REQUIRE(off.at(Stage::stage0, VerdictStage::stage0) == 0);
    REQUIRE(off.at(Stage::stage0, VerdictStage::stage1) == 6);
    REQUIRE(off.total() == 6);

    REQUIRE_THROWS_AS(confusion(std::vector<std::pair<Stage, VerdictStage>>{}, Phase::pre_task),
                      Error);
}

TEST_CASE("confusion equals an independent tally on random verdicts") {
    SplitMix64 rng(0xc0ffeeu);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::pair<Stage, VerdictStage>> labeled;
        const int n = rng.range(1, 40);
        for (int i = 0; i < n; ++i) {
            labeled.emplace_back(rng.range(0, 1) == 0 ? Stage::stage0 : Stage::stage1,
                                 static_cast<VerdictStage>(rng.range(0, 2)));
        }
        const ConfusionMatrix m = confusion(labeled, Phase::post_task);
        const auto expected = oracles::confusion_oracle(labeled);
        REQUIRE(m.total() == n);
        for (int row = 0; row < 2; ++row) {
            for (int col = 0; col < 3; ++col) {
                const auto it = expected.find({row, col});
                const int want = it == expected.end() ? 0 : it->second;
                REQUIRE(m.cells[static_cast<size_t>(row)][static_cast<size_t>(col)] == want);
            }
        }
    }
}

TEST_CASE("verdict records round-trip through the line format") {
    VerdictRecord record;
    record.text_id = "pre:wardrobe:stage1";
    record.intended = Stage::stage1;
    record.verdict = lexicon_judge(reference_narratives::wardrobe_stage1());
    const std::string line = verdict_record_to_line(record);
    REQUIRE(verdict_record_from_line(line) == record);
}
