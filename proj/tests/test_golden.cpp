#include <gtest/gtest.h>

#include "golden_prompts.hpp"
#include "transec/prompt_templates.hpp"

using namespace transec;

TEST(Golden, PromptsAreByteIdentical) {
    auto cases = testkit::golden_cases();
    ASSERT_EQ(cases.size(), 9u);
    for (const auto& c : cases) EXPECT_EQ(c.built, c.expected) << c.file;
}

TEST(Golden, TemplateFilesMatchEmbeddedConstants) {
    const auto dir = testkit::source_dir() / "data/templates";
    EXPECT_EQ(read_file(dir / "translation.txt"), kTranslationTemplate);
    EXPECT_EQ(read_file(dir / "judge.txt"), kJudgeTemplate);
    EXPECT_EQ(read_file(dir / "rag.txt"), kRagTemplate);
}
