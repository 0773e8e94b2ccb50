#include <doctest.h>

#include "cdsbench/corpus.hpp"
#include "cdsbench/error.hpp"
#include "cdsbench/metrics.hpp"

#include "test_support.hpp"

#include <cmath>
#include <map>

using namespace cdsbench;

namespace {

Lexicons bundled_lexicons() {
    return load_lexicons(testsupport::data_path("concreteness.csv"),
                         testsupport::data_path("function_words.txt"));
}

HashedEmbedder make_hashed() {
    ProviderDescriptor desc;
    desc.kind = "hashed";
    return HashedEmbedder(desc);
}

FixtureParser make_golden_parser() {
    ProviderDescriptor desc;
    desc.kind = "fixture";
    desc.fixture = testsupport::fixture_path("golden_parses.json");
    return FixtureParser(desc);
}

ChainParser make_chain_parser() {
    ProviderDescriptor desc;
    desc.kind = "chain";
    return ChainParser(desc);
}

// Oracle: concreteness ratings read straight out of the CSV text.
std::map<std::string, double> csv_ratings() {
    std::map<std::string, double> ratings;
    std::istringstream in(testsupport::slurp(testsupport::data_path("concreteness.csv")));
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto first = line.find(',');
        auto second = line.find(',', first + 1);
        auto third = line.find(',', second + 1);
        ratings[line.substr(0, first)] =
            std::stod(line.substr(second + 1, third - second - 1));
    }
    return ratings;
}

// Oracle: cosine computed by hand from per-text embeddings.
double oracle_cosine(Embedder& embedder, const std::string& a, const std::string& b) {
    EmbeddingVector va = embedder.embed_batch({a})[0];
    EmbeddingVector vb = embedder.embed_batch({b})[0];
    double dot = 0.0;
    for (int i = 0; i < va.dimension(); ++i) {
        dot += va.values[static_cast<std::size_t>(i)] * vb.values[static_cast<std::size_t>(i)];
    }
    return dot;
}

// Oracle: per-pair mean similarity, written as an explicit pass over the
// utterance list rather than through the batch plumbing.
std::optional<double> oracle_alignment(const Conversation& conv, Role role,
                                       Embedder& embedder) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i + 1 < conv.utterances.size(); ++i) {
        const Utterance& prompt = conv.utterances[i];
        const Utterance& response = conv.utterances[i + 1];
        if (response.role != role || prompt.role == response.role) continue;
        if (prompt.is_silence || prompt.is_unintelligible) continue;
        if (response.is_silence || response.is_unintelligible) continue;
        sum += oracle_cosine(embedder, prompt.text(), response.text());
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

// Oracle: O(k^2) double loop over one speaker's scoreable utterances.
std::optional<double> oracle_diversity(const Conversation& conv, Role role,
                                       Embedder& embedder) {
    std::vector<std::string> texts;
    for (const Utterance& u : conv.utterances) {
        if (u.role == role && !u.is_silence && !u.is_unintelligible) {
            texts.push_back(u.text());
        }
    }
    if (texts.size() < 2) return std::nullopt;
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        for (std::size_t j = i + 1; j < texts.size(); ++j) {
            sum += 1.0 - oracle_cosine(embedder, texts[i], texts[j]);
            ++n;
        }
    }
    return sum / n;
}

Conversation load_fixture_conversation(const std::string& name) {
    return parse_chat(testsupport::slurp(testsupport::fixture_path("corpus/" + name)), name);
}

}  // namespace

TEST_CASE("word_concreteness averages rated content words") {
    Lexicons lex = bundled_lexicons();
    auto ratings = csv_ratings();

    Utterance u = normalize_utterance("banana !");
    CHECK(*word_concreteness(u, lex.concreteness, lex.function_words) ==
          doctest::Approx(ratings.at("banana")).epsilon(1e-12));

    u = normalize_utterance("the a");
    CHECK_FALSE(word_concreteness(u, lex.concreteness, lex.function_words));

    u = normalize_utterance("big red truck");
    double expected = (ratings.at("big") + ratings.at("red") + ratings.at("truck")) / 3.0;
    CHECK(*word_concreteness(u, lex.concreteness, lex.function_words) ==
          doctest::Approx(expected).epsilon(1e-12));

    // OOV content words are skipped, not imputed.
    u = normalize_utterance("wanna play catch");
    expected = (ratings.at("play") + ratings.at("catch")) / 2.0;
    CHECK(*word_concreteness(u, lex.concreteness, lex.function_words) ==
          doctest::Approx(expected).epsilon(1e-12));

    // All content words OOV: undefined.
    u = normalize_utterance("zyzzyva qwerty");
    CHECK_FALSE(word_concreteness(u, lex.concreteness, lex.function_words));
}

TEST_CASE("lexical_density is the content-word proportion") {
    Lexicons lex = bundled_lexicons();

    Utterance u = normalize_utterance("i want the big truck");
    CHECK(*lexical_density(u, lex.function_words) == doctest::Approx(0.6).epsilon(1e-12));

    u = normalize_utterance("the of and");
    CHECK(*lexical_density(u, lex.function_words) == doctest::Approx(0.0));

    u = normalize_utterance("big red truck");
    CHECK(*lexical_density(u, lex.function_words) == doctest::Approx(1.0));

    CHECK_FALSE(lexical_density(make_silence(Role::Child), lex.function_words));
}

TEST_CASE("utterance_length counts normalized tokens") {
    CHECK(utterance_length(normalize_utterance("let's play catch")) == 3);
    CHECK(utterance_length(normalize_utterance("wanna play catch ?")) == 3);
}

TEST_CASE("syntactic_depth goes through the parser provider") {
    FixtureParser golden = make_golden_parser();
    CHECK(*syntactic_depth(normalize_utterance("yeah"), golden) == 1);

    ChainParser chain = make_chain_parser();
    CHECK(*syntactic_depth(normalize_utterance("one two three four five"), chain) == 5);

    // Provider failure: undefined with a reason, never a throw.
    std::string reason;
    Utterance missing = normalize_utterance("totally absent sentence");
    CHECK_FALSE(syntactic_depth(missing, golden, &reason));
    CHECK(reason.find("PROVIDER_UNAVAILABLE") != std::string::npos);

    CHECK_FALSE(syntactic_depth(make_silence(Role::Child), golden));
}

TEST_CASE("dialogue_alignment over exchange pairs") {
    HashedEmbedder embedder = make_hashed();

    // Parrot-shaped conversation: every response repeats its prompt.
    Conversation echo = testsupport::make_conversation("echo", 30,
                                                       {{Role::Child, "big red truck"},
                                                        {Role::Caregiver, "big red truck"},
                                                        {Role::Child, "banana juice"},
                                                        {Role::Caregiver, "banana juice"}});
    CHECK(*dialogue_alignment(echo, Role::Caregiver, embedder) ==
          doctest::Approx(1.0).epsilon(1e-6));

    // Token-disjoint prompt/response vocabulary: similarity zero.
    Conversation disjoint = testsupport::make_conversation("disjoint", 30,
                                                           {{Role::Child, "dog cat"},
                                                            {Role::Caregiver, "moon star"},
                                                            {Role::Child, "ball truck"},
                                                            {Role::Caregiver, "boat car"}});
    CHECK(*dialogue_alignment(disjoint, Role::Caregiver, embedder) == doctest::Approx(0.0));

    // Three-pair fixture equals the hand brute force.
    Conversation conv = testsupport::make_conversation("threepair", 30,
                                                       {{Role::Child, "want juice"},
                                                        {Role::Caregiver, "you want the juice"},
                                                        {Role::Child, "banana too"},
                                                        {Role::Caregiver, "banana and juice"}});
    auto expected = oracle_alignment(conv, Role::Caregiver, embedder);
    auto actual = dialogue_alignment(conv, Role::Caregiver, embedder);
    REQUIRE(expected);
    REQUIRE(actual);
    CHECK(*actual == doctest::Approx(*expected).epsilon(1e-9));

    // No eligible pairs: undefined.
    Conversation silent = testsupport::make_conversation(
        "silent", 30, {{Role::Child, ""}, {Role::Caregiver, "hello there"}});
    CHECK_FALSE(dialogue_alignment(silent, Role::Caregiver, embedder));
}

TEST_CASE("dialogue_diversity over a speaker's utterances") {
    HashedEmbedder embedder = make_hashed();

    // Same sentence k times: zero diversity.
    Conversation repeat = testsupport::make_conversation("repeat", 30,
                                                         {{Role::Child, "big red truck"},
                                                          {Role::Caregiver, "okay"},
                                                          {Role::Child, "big red truck"},
                                                          {Role::Caregiver, "okay"},
                                                          {Role::Child, "big red truck"}});
    CHECK(*dialogue_diversity(repeat, Role::Child, embedder) ==
          doctest::Approx(0.0).epsilon(1e-9));

    // Two token-disjoint utterances: cosine 0, distance 1.
    Conversation disjoint = testsupport::make_conversation("disjoint2", 30,
                                                           {{Role::Child, "dog cat"},
                                                            {Role::Caregiver, "okay"},
                                                            {Role::Child, "moon star"}});
    CHECK(*dialogue_diversity(disjoint, Role::Child, embedder) == doctest::Approx(1.0));

    // k = 5 fixture equals the O(k^2) brute force.
    Conversation conv = testsupport::make_conversation("k5", 30,
                                                       {{Role::Child, "want juice"},
                                                        {Role::Caregiver, "here"},
                                                        {Role::Child, "banana juice"},
                                                        {Role::Caregiver, "here"},
                                                        {Role::Child, "more juice please"},
                                                        {Role::Caregiver, "here"},
                                                        {Role::Child, "all done"},
                                                        {Role::Caregiver, "good"},
                                                        {Role::Child, "want down now"}});
    auto expected = oracle_diversity(conv, Role::Child, embedder);
    auto actual = dialogue_diversity(conv, Role::Child, embedder);
    REQUIRE(expected);
    REQUIRE(actual);
    CHECK(*actual == doctest::Approx(*expected).epsilon(1e-9));

    // Fewer than two utterances: undefined.
    Conversation lone = testsupport::make_conversation(
        "lone", 30, {{Role::Child, "hi"}, {Role::Caregiver, "hello"}});
    CHECK_FALSE(dialogue_diversity(lone, Role::Child, embedder));
}

TEST_CASE("profile_conversation on the appendix sample matches hand counts") {
    Lexicons lex = bundled_lexicons();
    FixtureParser parser = make_golden_parser();
    HashedEmbedder embedder = make_hashed();

    Conversation conv = load_fixture_conversation("appendix_c.cha");
    auto [child_rec, caregiver_rec] = profile_conversation(conv, lex, parser, embedder);

    // Hand-counted means: child (3+1+1)/3, caregiver (3+2+8+4)/4.
    CHECK(*child_rec.measure(Measure::UtteranceLength).value ==
          doctest::Approx(5.0 / 3.0).epsilon(1e-12));
    CHECK(*caregiver_rec.measure(Measure::UtteranceLength).value ==
          doctest::Approx(17.0 / 4.0).epsilon(1e-12));
    CHECK(child_rec.measure(Measure::UtteranceLength).n_scored == 3);
    CHECK(caregiver_rec.measure(Measure::UtteranceLength).n_scored == 4);
    // One child turn is silence.
    CHECK(child_rec.measure(Measure::UtteranceLength).n_skipped == 1);
}

TEST_CASE("profile_conversation of only silences leaves every field undefined") {
    Lexicons lex = bundled_lexicons();
    ChainParser parser = make_chain_parser();
    HashedEmbedder embedder = make_hashed();

    Conversation conv = testsupport::make_conversation(
        "silences", 30, {{Role::Child, ""}, {Role::Caregiver, ""}, {Role::Child, ""}});
    auto [child_rec, caregiver_rec] = profile_conversation(conv, lex, parser, embedder);
    for (const MetricRecord* rec : {&child_rec, &caregiver_rec}) {
        for (Measure m : kAllMeasures) {
            CHECK_FALSE(rec->measure(m).value);
            CHECK_FALSE(rec->measure(m).reason.empty());
            CHECK(rec->measure(m).n_scored == 0);
        }
    }
}

TEST_CASE("profiles are deterministic across repeated runs") {
    Lexicons lex = bundled_lexicons();
    ChainParser parser = make_chain_parser();
    HashedEmbedder embedder = make_hashed();

    Conversation a = load_fixture_conversation("small_05.cha");
    Conversation b = load_fixture_conversation("small_04.cha");

    auto first = profile_conversation(a, lex, parser, embedder);
    (void)profile_conversation(b, lex, parser, embedder);
    auto second = profile_conversation(a, lex, parser, embedder);
    for (Measure m : kAllMeasures) {
        const MeasureValue& x = first.first.measure(m);
        const MeasureValue& y = second.first.measure(m);
        CHECK(x.value.has_value() == y.value.has_value());
        if (x.value) CHECK(*x.value == *y.value);
    }
}

TEST_CASE("removing silences changes no metric value") {
    Lexicons lex = bundled_lexicons();
    ChainParser parser = make_chain_parser();
    HashedEmbedder embedder = make_hashed();

    for (const char* name : {"appendix_c.cha", "small_02.cha", "small_04.cha"}) {
        Conversation conv = alternate_and_pair(load_fixture_conversation(name)).conversation;
        Conversation stripped;
        stripped.id = conv.id;
        stripped.age_months = conv.age_months;
        for (const Utterance& u : conv.utterances) {
            if (!u.is_silence) stripped.utterances.push_back(u);
        }
        auto with_silence = profile_conversation(conv, lex, parser, embedder);
        auto without = profile_conversation(stripped, lex, parser, embedder);
        for (Measure m : kAllMeasures) {
            for (auto [lhs, rhs] : {std::pair{&with_silence.first, &without.first},
                                    std::pair{&with_silence.second, &without.second}}) {
                const MeasureValue& x = lhs->measure(m);
                const MeasureValue& y = rhs->measure(m);
                CHECK(x.value.has_value() == y.value.has_value());
                if (x.value && y.value) {
                    CHECK(*x.value == doctest::Approx(*y.value).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("hand-scored fixture: exact lengths, densities, golden depths") {
    Lexicons lex = bundled_lexicons();
    FixtureParser parser = make_golden_parser();
    HashedEmbedder embedder = make_hashed();

    Conversation conv = load_fixture_conversation("handscored_10.cha");
    REQUIRE(conv.utterances.size() == 10);
    auto [child_rec, caregiver_rec] = profile_conversation(conv, lex, parser, embedder);

    // Child: "i want the big truck" (5), "let's play catch" (3), "banana" (1).
    CHECK(*child_rec.measure(Measure::UtteranceLength).value ==
          doctest::Approx(3.0).epsilon(1e-12));
    // Caregiver: 7, 4, 3, 6, 5 tokens.
    CHECK(*caregiver_rec.measure(Measure::UtteranceLength).value ==
          doctest::Approx(5.0).epsilon(1e-12));

    // Densities against the bundled list: child 3/5, 3/3, 1/1; caregiver
    // 4/7, 2/4, 3/3, 3/6, 2/5.
    CHECK(*child_rec.measure(Measure::LexicalDensity).value ==
          doctest::Approx((3.0 / 5.0 + 1.0 + 1.0) / 3.0).epsilon(1e-12));
    CHECK(*caregiver_rec.measure(Measure::LexicalDensity).value ==
          doctest::Approx((4.0 / 7.0 + 0.5 + 1.0 + 0.5 + 0.4) / 5.0).epsilon(1e-12));

    // Depths from the golden parse file: child 3, 2, 1; caregiver 3, 3, 2, 4, 3.
    CHECK(*child_rec.measure(Measure::SyntacticDepth).value ==
          doctest::Approx(6.0 / 3.0).epsilon(1e-12));
    CHECK(*caregiver_rec.measure(Measure::SyntacticDepth).value ==
          doctest::Approx(15.0 / 5.0).epsilon(1e-12));

    // Concreteness against ratings read straight from the CSV.
    auto ratings = csv_ratings();
    double child_expected =
        ((ratings.at("want") + ratings.at("big") + ratings.at("truck")) / 3.0 +
         (ratings.at("play") + ratings.at("catch")) / 2.0 + ratings.at("banana")) /
        3.0;
    CHECK(*child_rec.measure(Measure::Concreteness).value ==
          doctest::Approx(child_expected).epsilon(1e-12));

    // Dialogue measures equal the independent oracles.
    auto child_align = oracle_alignment(conv, Role::Child, embedder);
    auto child_actual = child_rec.measure(Measure::DialogueAlignment).value;
    REQUIRE(child_align);
    REQUIRE(child_actual);
    CHECK(*child_actual == doctest::Approx(*child_align).epsilon(1e-9));

    auto caregiver_div = oracle_diversity(conv, Role::Caregiver, embedder);
    auto caregiver_actual = caregiver_rec.measure(Measure::DialogueDiversity).value;
    REQUIRE(caregiver_div);
    REQUIRE(caregiver_actual);
    CHECK(*caregiver_actual == doctest::Approx(*caregiver_div).epsilon(1e-9));

    // Unintelligible and silence turns were skipped, not scored.
    CHECK(child_rec.measure(Measure::UtteranceLength).n_scored == 3);
    CHECK(child_rec.measure(Measure::UtteranceLength).n_skipped == 2);
}

TEST_CASE("pipeline values equal exhaustive oracles on all small conversations") {
    HashedEmbedder embedder = make_hashed();
    namespace fs = std::filesystem;
    int checked = 0;
    for (const auto& entry :
         fs::directory_iterator(testsupport::fixture_path("corpus"))) {
        if (entry.path().extension() != ".cha") continue;
        Conversation raw = parse_chat(testsupport::slurp(entry.path().string()),
                                      entry.path().stem().string());
        if (raw.utterances.size() < 2) continue;
        Conversation conv = alternate_and_pair(raw).conversation;
        if (conv.utterances.size() > 6) continue;
        ++checked;
        for (Role role : {Role::Child, Role::Caregiver}) {
            auto expected_a = oracle_alignment(conv, role, embedder);
            auto actual_a = dialogue_alignment(conv, role, embedder);
            CHECK(expected_a.has_value() == actual_a.has_value());
            if (expected_a && actual_a) {
                CHECK(*actual_a == doctest::Approx(*expected_a).epsilon(1e-9));
            }
            auto expected_d = oracle_diversity(conv, role, embedder);
            auto actual_d = dialogue_diversity(conv, role, embedder);
            CHECK(expected_d.has_value() == actual_d.has_value());
            if (expected_d && actual_d) {
                CHECK(*actual_d == doctest::Approx(*expected_d).epsilon(1e-9));
            }
        }
    }
    CHECK(checked >= 3);  // the small_* fixtures qualify
}

TEST_CASE("scale bounds hold for every fixture conversation") {
    Lexicons lex = bundled_lexicons();
    ChainParser parser = make_chain_parser();
    HashedEmbedder embedder = make_hashed();
    namespace fs = std::filesystem;

    for (const auto& entry :
         fs::directory_iterator(testsupport::fixture_path("corpus"))) {
        if (entry.path().extension() != ".cha") continue;
        Conversation raw = parse_chat(testsupport::slurp(entry.path().string()),
                                      entry.path().stem().string());
        if (raw.utterances.size() < 2) continue;
        Conversation conv = alternate_and_pair(raw).conversation;
        auto [child_rec, caregiver_rec] = profile_conversation(conv, lex, parser, embedder);
        for (const MetricRecord* rec : {&child_rec, &caregiver_rec}) {
            if (auto v = rec->measure(Measure::LexicalDensity).value) {
                CHECK(*v >= 0.0);
                CHECK(*v <= 1.0);
            }
            if (auto v = rec->measure(Measure::DialogueAlignment).value) {
                CHECK(*v >= -1.0);
                CHECK(*v <= 1.0);
            }
            if (auto v = rec->measure(Measure::DialogueDiversity).value) {
                CHECK(*v >= 0.0);
                CHECK(*v <= 2.0);
            }
            if (auto v = rec->measure(Measure::SyntacticDepth).value) {
                CHECK(*v >= 1.0);
            }
            if (auto v = rec->measure(Measure::UtteranceLength).value) {
                CHECK(*v >= 1.0);
            }
            if (auto v = rec->measure(Measure::Concreteness).value) {
                CHECK(*v >= 1.0);
                CHECK(*v <= 5.0);
            }
        }
    }
}

TEST_CASE("metric records CSV round trip") {
    Lexicons lex = bundled_lexicons();
    ChainParser parser = make_chain_parser();
    HashedEmbedder embedder = make_hashed();

    Conversation conv = load_fixture_conversation("handscored_10.cha");
    auto [child_rec, caregiver_rec] = profile_conversation(conv, lex, parser, embedder);
    std::vector<MetricRecord> records = {child_rec, caregiver_rec};
    std::string csv = metric_records_to_csv(records);
    std::vector<MetricRecord> reloaded = metric_records_from_csv(csv);
    REQUIRE(reloaded.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(reloaded[i].conversation_id == records[i].conversation_id);
        CHECK(reloaded[i].role == records[i].role);
        for (Measure m : kAllMeasures) {
            const MeasureValue& x = records[i].measure(m);
            const MeasureValue& y = reloaded[i].measure(m);
            CHECK(x.value.has_value() == y.value.has_value());
            if (x.value) CHECK(*y.value == doctest::Approx(*x.value).epsilon(1e-9));
            CHECK(x.reason == y.reason);
            CHECK(x.n_scored == y.n_scored);
        }
    }
}
