#include <doctest.h>

#include "cod/util.hpp"

using namespace cod;

TEST_CASE("fnv1a64 is stable and seed-sensitive") {
    CHECK(fnv1a64("") == 14695981039346656037ULL);
    CHECK(fnv1a64("abc") == fnv1a64("abc"));
    CHECK(fnv1a64("abc") != fnv1a64("abd"));
    CHECK(fnv1a64("abc", 1) != fnv1a64("abc", 2));
    CHECK(to_hex(0).size() == 16);
    CHECK(to_hex(0xdeadbeef) == "00000000deadbeef");
}

TEST_CASE("utf8_decode counts code points") {
    CHECK(utf8_decode("abc").size() == 3);
    CHECK(utf8_decode("第1083条").size() == 6);
    CHECK(utf8_decode("").empty());
    // Invalid bytes survive as single code points.
    CHECK(utf8_decode("\xff\xfe").size() == 2);
    // Truncated multibyte sequence at end of string.
    CHECK(utf8_decode("a\xe4\xb8").size() == 3);
}

TEST_CASE("normalized_codepoints strips whitespace") {
    CHECK(normalized_codepoints("a b\tc\nd").size() == 4);
    CHECK(normalized_codepoints("你 好").size() == 2);
    // Ideographic space U+3000.
    CHECK(normalized_codepoints("你\xe3\x80\x80好").size() == 2);
    CHECK(normalized_codepoints("  \n\t ").empty());
}

TEST_CASE("string helpers") {
    CHECK(trim("  x  ") == "x");
    CHECK(trim("") == "");
    CHECK(to_lower("AbC") == "abc");
    CHECK(split_lines("a\nb\r\nc") == std::vector<std::string>{"a", "b", "c"});
    CHECK(split_lines("a\n") == std::vector<std::string>{"a", ""});
    CHECK(replace_all("a-b-c", "-", "+") == "a+b+c");
    CHECK(count_occurrences("abcabc", "bc") == 2);
    CHECK(count_occurrences("aaa", "aa") == 1);
}

TEST_CASE("file io round trip") {
    namespace fs = std::filesystem;
    fs::path p = fs::temp_directory_path() / "cod_util_io_test.txt";
    write_text_file(p, "hello\n你好");
    CHECK(read_text_file(p) == "hello\n你好");
    CHECK(file_digest_hex(p) == file_digest_hex(p));
    fs::remove(p);
    CHECK_THROWS_AS(read_text_file(p), ValidationError);
}
