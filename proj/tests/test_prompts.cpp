#include <doctest.h>

#include "cod/prompts.hpp"
#include "test_support.hpp"

using namespace cod;
using cod_test::make_candidate;
using cod_test::TempDir;

namespace {

std::string joined_text(const RenderedPrompt& p) {
    std::string out;
    for (const ChatMessage& m : p.messages) {
        out += m.content;
        out += '\n';
    }
    return out;
}

}  // namespace

TEST_CASE("builtin catalogs carry all seven templates in both languages") {
    for (TemplateLanguage lang : {TemplateLanguage::zh, TemplateLanguage::en}) {
        TemplateCatalog cat = TemplateCatalog::builtin(lang);
        for (TemplateId id :
             {TemplateId::question_analysis, TemplateId::summarize,
              TemplateId::evidence_analysis, TemplateId::critique,
              TemplateId::revise, TemplateId::respond, TemplateId::judge}) {
            CHECK_NOTHROW(cat.get(id));
        }
        CHECK(cat.get(TemplateId::question_analysis).stop_marker.has_value());
        // The rubric instructs the exact rating format.
        CHECK(cat.get(TemplateId::judge).body.find("Rating: [[") !=
              std::string::npos);
    }
}

TEST_CASE("render substitutes placeholders and tags the step") {
    TemplateCatalog cat = TemplateCatalog::builtin(TemplateLanguage::en);
    RenderedPrompt p = cat.render(
        TemplateId::question_analysis,
        {{"question", "May I revoke the gift?"}, {"articles", "ARTICLE-BLOCK"}},
        {}, make_step_tag(TemplateId::question_analysis, "c7"));
    REQUIRE(p.messages.size() == 2);
    CHECK(p.messages[0].role == Role::system);
    CHECK(p.messages[1].role == Role::user);
    CHECK(p.step_tag == "question_analysis:c7");
    // The question placeholder occurs twice in this template.
    CHECK(count_occurrences(p.messages[1].content, "May I revoke the gift?") == 2);
    CHECK(count_occurrences(p.messages[1].content, "ARTICLE-BLOCK") == 1);
    CHECK(joined_text(p).find("{{") == std::string::npos);
}

TEST_CASE("rendering is pure") {
    TemplateCatalog cat = TemplateCatalog::builtin(TemplateLanguage::zh);
    std::map<std::string, std::string> bindings = {{"question", "问题"},
                                                   {"articles", "法条"}};
    RenderedPrompt a = cat.render(TemplateId::question_analysis, bindings, {},
                                  "tag");
    RenderedPrompt b = cat.render(TemplateId::question_analysis, bindings, {},
                                  "tag");
    REQUIRE(a.messages.size() == b.messages.size());
    for (std::size_t i = 0; i < a.messages.size(); ++i) {
        CHECK(a.messages[i].role == b.messages[i].role);
        CHECK(a.messages[i].content == b.messages[i].content);
    }
    CHECK(a.step_tag == b.step_tag);
}

TEST_CASE("render names the missing placeholder") {
    TemplateCatalog cat = TemplateCatalog::builtin(TemplateLanguage::en);
    CHECK_THROWS_WITH_AS(
        cat.render(TemplateId::question_analysis, {{"question", "q"}}),
        doctest::Contains("articles"), TemplateError);
}

TEST_CASE("respond template ends at the answer cue") {
    TemplateCatalog cat = TemplateCatalog::builtin(TemplateLanguage::en);
    RenderedPrompt p = cat.render(TemplateId::respond,
                                  {{"question", "q"},
                                   {"articles", "arts"},
                                   {"que_ana", "qa"},
                                   {"art_ana", "aa"}});
    const std::string& body = p.messages.back().content;
    CHECK(body.ends_with("Answer:"));

    TemplateCatalog zh = TemplateCatalog::builtin(TemplateLanguage::zh);
    RenderedPrompt pz = zh.render(TemplateId::respond,
                                  {{"question", "q"},
                                   {"articles", "arts"},
                                   {"que_ana", "qa"},
                                   {"art_ana", "aa"}});
    CHECK(pz.messages.back().content.ends_with("回答："));
}

TEST_CASE("in-context examples inject as alternating turns") {
    TemplateCatalog cat = TemplateCatalog::builtin(TemplateLanguage::en);
    std::vector<IclExample> icl = {{"demo input 1", "demo output 1"},
                                   {"demo input 2", "demo output 2"}};
    RenderedPrompt p = cat.render(
        TemplateId::critique,
        {{"question", "q"}, {"article", "a"}, {"art_ana", "ana"},
         {"cur_art_id", "12"}},
        icl);
    REQUIRE(p.messages.size() == 6);  // system + 2*(user,assistant) + live user
    CHECK(p.messages[1].role == Role::user);
    CHECK(p.messages[1].content == "demo input 1");
    CHECK(p.messages[2].role == Role::assistant);
    CHECK(p.messages[2].content == "demo output 1");
    CHECK(p.messages[3].content == "demo input 2");
    CHECK(p.messages[5].role == Role::user);

    std::vector<IclExample> three(3, {"i", "o"});
    CHECK_THROWS_AS(
        cat.render(TemplateId::critique,
                   {{"question", "q"}, {"article", "a"}, {"art_ana", "ana"},
                    {"cur_art_id", "12"}},
                   three),
        ValidationError);
}

TEST_CASE("binding values round-trip verbatim, braces included") {
    TemplateCatalog cat = TemplateCatalog::builtin(TemplateLanguage::en);
    const std::string tricky = "value with {{nested}} braces and 中文";
    RenderedPrompt p = cat.render(TemplateId::evidence_analysis,
                                  {{"question", tricky},
                                   {"que_ana", "qa"},
                                   {"article", "art"}});
    // question appears twice in the evidence template? once; count matches
    // the placeholder occurrences in the template body.
    const PromptTemplate& tmpl = cat.get(TemplateId::evidence_analysis);
    std::size_t expected = count_occurrences(tmpl.body, "{{question}}") +
                           count_occurrences(tmpl.system, "{{question}}");
    CHECK(count_occurrences(joined_text(p), tricky) == expected);
    CHECK(count_occurrences(joined_text(p), "{{nested}}") == expected);
}

TEST_CASE("format_articles emits one labeled-free block per candidate") {
    std::vector<CandidateArticle> candidates = {
        make_candidate("1083", RelevanceLabel::Necessary, 0.9, "正文甲"),
        make_candidate("37", RelevanceLabel::NotRequired, 0.4, "正文乙"),
    };

    SUBCASE("zh blocks in input order") {
        std::string text = format_articles(candidates, TemplateLanguage::zh);
        std::size_t first = text.find("第1083条");
        std::size_t second = text.find("第37条");
        REQUIRE(first != std::string::npos);
        REQUIRE(second != std::string::npos);
        CHECK(first < second);
        CHECK(text.find("正文甲") != std::string::npos);
        CHECK(text.find("《Civil Code》") != std::string::npos);
    }

    SUBCASE("en blocks carry Article tokens") {
        std::string text = format_articles(candidates, TemplateLanguage::en);
        CHECK(text.find("Article 1083") != std::string::npos);
        CHECK(text.find("[Civil Code]") != std::string::npos);
    }

    SUBCASE("labels never leak") {
        for (TemplateLanguage lang :
             {TemplateLanguage::zh, TemplateLanguage::en}) {
            std::string text = format_articles(candidates, lang);
            for (const char* label : {"necessary", "optional", "not_required"}) {
                CHECK(text.find(label) == std::string::npos);
            }
        }
    }

    SUBCASE("five articles, five blocks, ids verbatim") {
        std::vector<CandidateArticle> five;
        for (int i = 1; i <= 5; ++i) {
            five.push_back(make_candidate("10" + std::to_string(i),
                                          RelevanceLabel::Optional, 0.5));
        }
        std::string text = format_articles(five, TemplateLanguage::zh);
        CHECK(count_occurrences(text, "\n\n") == 4);
        for (int i = 1; i <= 5; ++i) {
            CHECK(text.find("第10" + std::to_string(i) + "条") !=
                  std::string::npos);
        }
    }

    SUBCASE("empty list is an error") {
        CHECK_THROWS_AS(format_articles({}, TemplateLanguage::zh),
                        ValidationError);
    }
}

TEST_CASE("split_on_marker") {
    auto [before, after] = split_on_marker("QA...MARKER...EA", "MARKER");
    CHECK(before == "QA...");
    REQUIRE(after.has_value());
    CHECK(*after == "...EA");

    auto [whole, none] = split_on_marker("no marker here", "MARKER");
    CHECK(whole == "no marker here");
    CHECK_FALSE(none.has_value());

    auto [empty, rest] = split_on_marker("MARKERtail", "MARKER");
    CHECK(empty == "");
    REQUIRE(rest.has_value());
    CHECK(*rest == "tail");

    CHECK_THROWS_AS(split_on_marker("text", ""), ValidationError);
}

TEST_CASE("template files override builtins") {
    TempDir dir;
    auto path = dir / "critique.txt";
    write_text_file(path,
                    "id: critique\n"
                    "required: question, article, art_ana, cur_art_id\n"
                    "---\n"
                    "You are a terse reviewer.\n"
                    "===\n"
                    "Q: {{question}}\nA: {{article}}\nANA: {{art_ana}}\n"
                    "ID: {{cur_art_id}}\n");
    TemplateCatalog cat = TemplateCatalog::builtin(TemplateLanguage::en);
    cat.load_template_file(path);
    const PromptTemplate& tmpl = cat.get(TemplateId::critique);
    CHECK(tmpl.system == "You are a terse reviewer.");
    CHECK(tmpl.body.starts_with("Q: {{question}}"));

    SUBCASE("missing id is rejected") {
        write_text_file(dir / "bad.txt", "required: x\n---\nbody {{x}}\n");
        CHECK_THROWS_AS(cat.load_template_file(dir / "bad.txt"), TemplateError);
    }

    SUBCASE("required placeholder absent from body is rejected") {
        write_text_file(dir / "bad2.txt",
                        "id: summarize\nrequired: question\n---\nno holes\n");
        CHECK_THROWS_WITH_AS(cat.load_template_file(dir / "bad2.txt"),
                             doctest::Contains("question"), TemplateError);
    }

    SUBCASE("unknown template id is rejected") {
        write_text_file(dir / "bad3.txt", "id: nonsense\n---\nbody\n");
        CHECK_THROWS_AS(cat.load_template_file(dir / "bad3.txt"), TemplateError);
    }
}

TEST_CASE("icl example files parse paired records") {
    TempDir dir;
    auto path = dir / "question_analysis.txt";
    write_text_file(path,
                    "=== input ===\n"
                    "first question\n"
                    "=== output ===\n"
                    "first analysis\nsecond line\n"
                    "=== input ===\n"
                    "second question\n"
                    "=== output ===\n"
                    "second analysis\n");
    auto examples = load_icl_examples(path);
    REQUIRE(examples.size() == 2);
    CHECK(examples[0].input == "first question");
    CHECK(examples[0].output == "first analysis\nsecond line");
    CHECK(examples[1].output == "second analysis");

    write_text_file(dir / "bad.txt", "=== output ===\norphan\n");
    CHECK_THROWS_AS(load_icl_examples(dir / "bad.txt"), ValidationError);
}

TEST_CASE("repo icl fixtures load for every template") {
    namespace fs = std::filesystem;
    const fs::path root(COD_FIXTURES_DIR);
    for (const char* lang : {"en", "zh"}) {
        for (const char* id :
             {"question_analysis", "summarize", "evidence_analysis", "critique",
              "revise", "respond"}) {
            fs::path file = root / "icl" / lang / (std::string(id) + ".txt");
            REQUIRE_MESSAGE(fs::exists(file), file.string());
            auto examples = load_icl_examples(file);
            CHECK(examples.size() == 2);
        }
    }
}
