#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "morphgrasp/cli.hpp"

using namespace morphgrasp;

namespace {

struct CliCapture {
  std::ostringstream out, err;
  int code = -1;
};

CliCapture run_cli(std::vector<std::string> args) {
  std::vector<const char*> argv = {"morphgrasp"};
  for (const auto& a : args) argv.push_back(a.c_str());
  CliCapture cap;
  std::streambuf* old_out = std::cout.rdbuf(cap.out.rdbuf());
  std::streambuf* old_err = std::cerr.rdbuf(cap.err.rdbuf());
  try {
    cap.code = cli_run(int(argv.size()), argv.data());
  } catch (...) {
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    throw;
  }
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  return cap;
}

std::string fixture(const std::string& name, const char* ext) {
  return std::string(FIXTURE_DIR) + "/" + name + ext;
}

}  // namespace

TEST_CASE("no arguments is a usage error with a synopsis on stderr") {
  CliCapture cap = run_cli({});
  CHECK(cap.code == 2);
  CHECK(cap.err.str().find("Usage") != std::string::npos);
  CHECK(run_cli({"frobnicate"}).code == 2);
  CHECK(run_cli({"--help"}).code == 0);
}

TEST_CASE("compile reports the documented node and dof counts") {
  CliCapture cap = run_cli({"compile", fixture("toy2f", ".urdf"), "--meta",
                            fixture("toy2f", ".meta.json"), "-o",
                            "cli_t2f.bundle"});
  CAPTURE(cap.err.str());
  REQUIRE(cap.code == 0);
  CHECK(cap.out.str().find("N_h=7") != std::string::npos);
  CHECK(cap.out.str().find("L_h=4") != std::string::npos);

  CliCapture ins = run_cli({"inspect", "cli_t2f.bundle"});
  REQUIRE(ins.code == 0);
  CHECK(ins.out.str().find("nodes (N_h): 7") != std::string::npos);
  CHECK(ins.out.str().find("actuated dof (L_h): 4") != std::string::npos);
  CHECK(ins.out.str().find("thumb_mcp") != std::string::npos);

  CliCapture id = run_cli({"identify", "cli_t2f.bundle"});
  REQUIRE(id.code == 0);
  CHECK(id.out.str().find("\"primmap/1\"") != std::string::npos);
  CHECK(id.out.str().find("FLEX") != std::string::npos);

  // a missing input is a domain error with the code in the message
  CliCapture missing = run_cli({"compile", "no_such.urdf", "-o", "x.bundle"});
  CHECK(missing.code == 1);
  CHECK(missing.err.str().find("error: IoError") != std::string::npos);
}

TEST_CASE("eval refuses weights with a missing parameter") {
  PolicyNetwork net = PolicyNetwork::randomized(13);
  nlohmann::json doc = weights_to_json(net);
  doc["params"].erase(0);
  {
    std::ofstream out("cli_bad_weights.json");
    out << doc.dump();
  }
  CliCapture cap = run_cli({"eval", "--weights", "cli_bad_weights.json",
                            "--hand", "cli_t2f.bundle", "--trials", "1"});
  CHECK(cap.code == 1);
  CHECK(cap.err.str().find("MissingParameter") != std::string::npos);
  std::remove("cli_bad_weights.json");

  save_weights(net, "cli_weights.json");
  CliCapture bad_obj =
      run_cli({"eval", "--weights", "cli_weights.json", "--hand",
               "cli_t2f.bundle", "--object", "dodecahedron", "--trials", "1"});
  CHECK(bad_obj.code == 1);
  CHECK(bad_obj.err.str().find("InvalidConfig") != std::string::npos);
}

TEST_CASE("eval and rollout run a saved policy end to end") {
  CliCapture ev = run_cli({"eval", "--weights", "cli_weights.json", "--hand",
                           "cli_t2f.bundle", "--trials", "2", "--seed", "4"});
  CAPTURE(ev.err.str());
  REQUIRE(ev.code == 0);
  CHECK(ev.out.str().find("trials: 2") != std::string::npos);
  CHECK(ev.out.str().find("success_rate:") != std::string::npos);
  CHECK(ev.out.str().find("mean_step_reward:") != std::string::npos);
  // same seed, same result
  CliCapture ev2 = run_cli({"eval", "--weights", "cli_weights.json", "--hand",
                            "cli_t2f.bundle", "--trials", "2", "--seed", "4"});
  CHECK(ev2.out.str() == ev.out.str());

  CliCapture ro = run_cli({"rollout", "--weights", "cli_weights.json", "--hand",
                           "cli_t2f.bundle", "--record", "cli_episode.jsonl",
                           "--seed", "4"});
  CAPTURE(ro.err.str());
  REQUIRE(ro.code == 0);
  std::ifstream log("cli_episode.jsonl");
  REQUIRE(log);
  std::string header;
  std::getline(log, header);
  CHECK(header.find("\"schema\": \"episode/1\"") != std::string::npos);
  int lines = 0;
  std::string line;
  while (std::getline(log, line)) ++lines;
  CHECK(lines == 150);  // default 120 explore + 30 lift steps
  log.close();
  std::remove("cli_episode.jsonl");
  std::remove("cli_weights.json");
  std::remove("cli_t2f.bundle");
}

TEST_CASE("object specs parse dimensions and reject malformed input") {
  ObjectSpec s = parse_object("sphere:0.03");
  CHECK(s.shape == ObjectShape::Sphere);
  CHECK(s.size.x == 0.03);
  ObjectSpec b = parse_object("box:0.01x0.02x0.03");
  CHECK(b.shape == ObjectShape::Box);
  CHECK(b.size.z == 0.03);
  ObjectSpec c = parse_object("cylinder:0.02x0.05");
  CHECK(c.shape == ObjectShape::Cylinder);
  CHECK(c.size.x == 0.02);
  CHECK(c.size.z == 0.05);
  CHECK(parse_object("sphere").shape == ObjectShape::Sphere);  // defaults
  CHECK_THROWS_MATCHES(parse_object("torus:0.1"), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::InvalidConfig;
                       }));
  CHECK_THROWS_AS(parse_object("box:0.1x0.2"), Error);
  CHECK(split_csv("a,b,,c") == std::vector<std::string>({"a", "b", "c"}));
}

TEST_CASE("metadata files load hints, palm frames and overrides") {
  CompileOptions opt = load_meta(fixture("toy2f", ".meta.json"));
  CHECK(opt.hints.wrist_link == "palm");
  REQUIRE(opt.palm.has_value());
  CHECK(opt.palm->normal.z == Catch::Approx(1.0));
  CHECK(opt.palm->longitudinal.y == Catch::Approx(1.0));
  CHECK_THROWS_MATCHES(load_meta("no_such_meta.json"), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == ErrorCode::IoError;
                       }));
}

TEST_CASE("the gradient audit passes for a quick instance count") {
  auto results = run_gradcheck(17, 2);
  CHECK(results.size() >= 22);
  bool saw_policy = false;
  for (const auto& r : results) {
    INFO(r.name);
    CHECK(r.worst < 1e-5);
    if (r.name == "policy_loss") saw_policy = true;
  }
  CHECK(saw_policy);
}
