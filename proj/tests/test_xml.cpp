#include <catch2/catch_amalgamated.hpp>

#include "morphgrasp/xml.hpp"

using namespace morphgrasp;

TEST_CASE("xml parses elements, attributes and nesting") {
  auto doc = xml::parse(R"(<?xml version="1.0"?>
<!-- leading comment -->
<robot name="bot">
  <link name="a"/>
  <link name="b"></link>
  <joint name="j" type="revolute">
    <origin xyz="1 2 3"/>
  </joint>
</robot>)");
  REQUIRE(doc->name == "robot");
  REQUIRE(*doc->attr("name") == "bot");
  REQUIRE(doc->children.size() == 3);
  auto links = doc->children_named("link");
  REQUIRE(links.size() == 2);
  CHECK(*links[0]->attr("name") == "a");
  CHECK(*links[1]->attr("name") == "b");
  const xml::Element* joint = doc->child("joint");
  REQUIRE(joint != nullptr);
  REQUIRE(joint->child("origin") != nullptr);
  CHECK(*joint->child("origin")->attr("xyz") == "1 2 3");
  CHECK(doc->child("nonexistent") == nullptr);
  CHECK(doc->attr("nonexistent") == nullptr);
}

TEST_CASE("xml decodes the five predefined entities") {
  auto doc = xml::parse(R"(<r v="&lt;&gt;&amp;&quot;&apos;"/>)");
  CHECK(*doc->attr("v") == "<>&\"'");
}

TEST_CASE("xml accepts single-quoted attributes and interior comments") {
  auto doc = xml::parse("<r a='x'><!-- note --><c/></r>");
  CHECK(*doc->attr("a") == "x");
  CHECK(doc->children.size() == 1);
}

TEST_CASE("xml syntax errors carry XmlSyntax with an offset") {
  auto expect_syntax = [](const std::string& text) {
    try {
      xml::parse(text);
      FAIL("expected a parse error for: " << text);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::XmlSyntax);
      CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
  };
  expect_syntax("<a><b></a>");            // mismatched closing tag
  expect_syntax("<a x=\"1\" x=\"2\"/>");  // duplicate attribute
  expect_syntax("<a");                    // unterminated tag
  expect_syntax("<a/><b/>");              // trailing content
  expect_syntax("<a v=\"&nope;\"/>");     // unknown entity
  expect_syntax("<a v=\"1/>");            // unterminated attribute value
  expect_syntax("<a><b/>");               // unterminated element
}
