#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <pty.h>
#include <unistd.h>

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "edgetree/bench.hpp"
#include "edgetree/cart.hpp"
#include "edgetree/numfmt.hpp"
#include "edgetree/process.hpp"
#include "oracles/generators.hpp"

using namespace edgetree;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

CommandResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), EDGETREE_CLI_PATH);
  return run_command(args);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json manifest(const fs::path& dir) { return json::parse(slurp(dir / "run.json")); }

std::string p(const fs::path& path) { return path.string(); }

struct Workspace {
  TempDir dir;
  fs::path toy;
  fs::path flows;

  Workspace() {
    toy = dir.path() / "toy.csv";
    std::ofstream(toy) << "a,b,Label\n1,5,0\n2,3,0\n3,9,0\n10,4,1\n11,2,1\n12,8,1\n";
    flows = dir.path() / "flows.csv";
    save_csv(testing::synthetic_flows(5, 1500, 0.02), flows);
  }
};

}  // namespace

TEST_CASE("train") {
  Workspace ws;
  SUBCASE("separable toy -> depth-1 model and manifest") {
    const auto out = ws.dir.path() / "run";
    const auto r = cli({"train", p(ws.toy), "--out", p(out)});
    REQUIRE(r.exit_code == 0);
    const auto tree = load_tree(out / "model.tree");
    CHECK(tree.depth() == 1);
    const auto m = manifest(out);
    CHECK(m["subcommand"] == "train");
    CHECK(m["params"]["ccp_alpha"].get<double>() == 0.0001);
    CHECK(m["params"]["seed"] == 0);
    CHECK(m["tool_versions"].contains("edgetree"));
  }
  SUBCASE("missing file -> nonzero, nothing written") {
    const auto out = ws.dir.path() / "none";
    const auto r = cli({"train", p(ws.dir.path() / "missing.csv"), "--out", p(out)});
    CHECK(r.exit_code != 0);
    CHECK_FALSE(fs::exists(out / "model.tree"));
    CHECK_FALSE(fs::exists(out / "run.json"));
  }
  SUBCASE("malformed data -> nonzero, no model") {
    const auto bad = ws.dir.path() / "bad.csv";
    std::ofstream(bad) << "a,Label\n1,0\nx,1\n";
    const auto out = ws.dir.path() / "bad";
    CHECK(cli({"train", p(bad), "--out", p(out)}).exit_code == 1);
    CHECK_FALSE(fs::exists(out / "model.tree"));
  }
  SUBCASE("identical parameters give identical models") {
    const auto a = ws.dir.path() / "a";
    const auto b = ws.dir.path() / "b";
    REQUIRE(cli({"train", p(ws.flows), "--out", p(a), "--seed", "4", "--max-depth", "6"}).exit_code == 0);
    REQUIRE(cli({"train", p(ws.flows), "--out", p(b), "--seed", "4", "--max-depth", "6"}).exit_code == 0);
    CHECK(slurp(a / "model.tree") == slurp(b / "model.tree"));
    auto ma = manifest(a), mb = manifest(b);
    ma.erase("timestamp");
    mb.erase("timestamp");
    ma["outputs"].erase("model");
    mb["outputs"].erase("model");
    ma["params"].erase("out");
    CHECK(ma["params"] == mb["params"]);
  }
  SUBCASE("label map and dropped columns") {
    const auto named = ws.dir.path() / "named.csv";
    std::ofstream(named) << "IPV4_SRC_ADDR,x,Label\n10.0.0.1,1,Benign\n10.0.0.2,2,Benign\n10.0.0.3,8,Attack\n"
                            "10.0.0.4,9,Attack\n";
    const auto out = ws.dir.path() / "named";
    CHECK(cli({"train", p(named), "--out", p(out)}).exit_code != 0);
    const auto r = cli({"train", p(named), "--out", p(out), "--label-map", "Benign=0,Attack=1", "--drop-columns",
                        "IPV4_SRC_ADDR"});
    REQUIRE(r.exit_code == 0);
    CHECK(load_tree(out / "model.tree").n_features() == 1);
  }
}

TEST_CASE("evaluate") {
  Workspace ws;
  SUBCASE("cv on separable data") {
    const auto sep = ws.dir.path() / "sep.csv";
    save_csv(testing::separable_dataset(3, 150), sep);
    const auto out = ws.dir.path() / "cv";
    REQUIRE(cli({"evaluate", p(sep), "--out", p(out), "--max-depth", "3"}).exit_code == 0);
    const auto m = manifest(out);
    CHECK(m["outputs"]["bacc_mean"].get<double>() == 1.0);
    CHECK(m["params"]["k"] == 5);
    CHECK(m["params"]["repeats"] == 5);
    const auto csv = slurp(out / "evaluate.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 26);
  }
  SUBCASE("holdout") {
    const auto out = ws.dir.path() / "ho";
    REQUIRE(cli({"evaluate", p(ws.flows), "--mode", "holdout", "--holdout", "0.25", "--out", p(out)}).exit_code == 0);
    CHECK(manifest(out)["params"]["holdout_fraction"].get<double>() == 0.25);
  }
  SUBCASE("holdout fraction 0 is a usage error") {
    const auto out = ws.dir.path() / "h0";
    CHECK(cli({"evaluate", p(ws.flows), "--mode", "holdout", "--holdout", "0", "--out", p(out)}).exit_code == 2);
    CHECK_FALSE(fs::exists(out));
  }
  SUBCASE("preprocessing arm") {
    const auto out = ws.dir.path() / "pre";
    REQUIRE(cli({"evaluate", p(ws.flows), "--scale", "--categorical", "PROTOCOL,L4_DST_PORT", "--k", "3",
                 "--repeats", "1", "--out", p(out)})
                .exit_code == 0);
    CHECK(manifest(out)["params"]["scale"] == true);
    CHECK(cli({"evaluate", p(ws.flows), "--categorical", "NOPE", "--out", p(out)}).exit_code == 1);
  }
  SUBCASE("saved model scoring") {
    const auto tr = ws.dir.path() / "tr";
    REQUIRE(cli({"train", p(ws.flows), "--out", p(tr)}).exit_code == 0);
    const auto out = ws.dir.path() / "score";
    REQUIRE(cli({"evaluate", p(ws.flows), "--model", p(tr / "model.tree"), "--out", p(out)}).exit_code == 0);
    CHECK(manifest(out)["outputs"]["bacc"].get<double>() > 0.9);
    CHECK(cli({"evaluate", p(ws.toy), "--model", p(tr / "model.tree"), "--out", p(out)}).exit_code == 1);
  }
}

TEST_CASE("sweep") {
  Workspace ws;
  const auto out = ws.dir.path() / "sw";
  REQUIRE(cli({"sweep", p(ws.flows), "--out", p(out), "--sweep-runs", "1"}).exit_code == 0);
  const auto m = manifest(out);
  CHECK(m["params"]["depths"] == json::array({2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}));
  CHECK(m["params"]["threshold"].get<double>() == 0.985);
  CHECK(m["params"]["holdout_fraction"].get<double>() == 0.3);
  CHECK(m["outputs"]["rows"].size() == 11);
  const auto csv = slurp(out / "sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 12);
  CHECK(cli({"sweep", p(ws.flows), "--depths", "", "--out", p(out)}).exit_code == 2);
  CHECK(cli({"sweep", p(ws.flows), "--depths", "0", "--out", p(out)}).exit_code == 2);
  const auto one = ws.dir.path() / "one";
  REQUIRE(cli({"sweep", p(ws.flows), "--depths", "3", "--threshold", "0.5", "--out", p(one)}).exit_code == 0);
  CHECK(manifest(one)["outputs"]["rows"][0]["passed"] == true);
}

TEST_CASE("emit") {
  Workspace ws;
  const auto tr = ws.dir.path() / "tr";
  REQUIRE(cli({"train", p(ws.flows), "--out", p(tr)}).exit_code == 0);
  const auto model = p(tr / "model.tree");
  SUBCASE("default style is nested-if") {
    const auto out = ws.dir.path() / "e1";
    REQUIRE(cli({"emit", "--model", model, "--schema", p(ws.flows), "--out", p(out)}).exit_code == 0);
    CHECK(fs::exists(out / "predict.c"));
    CHECK(fs::exists(out / "predict.h"));
    CHECK_FALSE(fs::exists(out / "firmware.c"));
    CHECK(slurp(out / "predict.c").find("int predict(void)") != std::string::npos);
    CHECK(slurp(out / "predict.c").find("ft_IN_BYTES") != std::string::npos);
    CHECK(manifest(out)["params"]["style"] == "nested-if");
  }
  SUBCASE("both styles with firmware") {
    const auto out = ws.dir.path() / "e2";
    REQUIRE(cli({"emit", "--model", model, "--style", "both", "--firmware", "--out", p(out)}).exit_code == 0);
    for (const char* style : {"nested-if", "array-recursive"}) {
      CHECK(fs::exists(out / style / "predict.c"));
      CHECK(fs::exists(out / style / "predict.h"));
      CHECK(fs::exists(out / style / "firmware.c"));
    }
  }
  SUBCASE("errors") {
    const auto out = ws.dir.path() / "e3";
    CHECK(cli({"emit", "--model", model, "--schema", p(ws.toy), "--out", p(out)}).exit_code == 1);
    CHECK_FALSE(fs::exists(out / "predict.c"));
    CHECK(cli({"emit", "--model", model, "--style", "fancy", "--out", p(out)}).exit_code == 2);
    CHECK(cli({"emit", "--out", p(out)}).exit_code == 2);
  }
}

TEST_CASE("bench") {
  if (!Toolchain::from_env().available()) {
    MESSAGE("no host C toolchain; skipping");
    return;
  }
  Workspace ws;
  const auto tr = ws.dir.path() / "tr";
  REQUIRE(cli({"train", p(ws.flows), "--out", p(tr)}).exit_code == 0);
  const auto out = ws.dir.path() / "bench";
  const auto r = cli({"bench", p(ws.flows), "--model", p(tr / "model.tree"), "--out", p(out), "--iterations", "1000",
                      "--timing-records", "20"});
  REQUIRE(r.exit_code == 0);
  const auto raw = slurp(out / "size_raw.txt");
  CHECK(raw.find("text") != std::string::npos);
  CHECK(raw.find("bss") != std::string::npos);
  const auto m = manifest(out);
  CHECK(m["params"]["transport"] == "host");
  CHECK(m["outputs"]["rows"].size() == 6);
  CHECK_FALSE(m["tool_versions"]["cc_version"].get<std::string>().empty());
  // --port switches to the serial path.
  const auto serial = cli({"bench", p(ws.flows), "--model", p(tr / "model.tree"), "--out",
                           p(ws.dir.path() / "serial"), "--port", "/nonexistent/ttyUSB9"});
  CHECK(serial.exit_code == 1);
  CHECK(serial.output.find("/nonexistent/ttyUSB9") != std::string::npos);
}

TEST_CASE("serial-send") {
  Workspace ws;
  const auto tr = ws.dir.path() / "tr";
  REQUIRE(cli({"train", p(ws.flows), "--out", p(tr), "--max-depth", "5"}).exit_code == 0);
  const auto tree = load_tree(tr / "model.tree");

  SUBCASE("model is required") {
    CHECK(cli({"serial-send", p(ws.flows), "--port", "/dev/null"}).exit_code == 2);
  }

  int master = -1, slave = -1;
  char name[256];
  if (openpty(&master, &slave, name, nullptr, nullptr) != 0) {
    MESSAGE("openpty unavailable; skipping");
    return;
  }
  // Fake device: answers each line with the tree's class and a varying time.
  std::atomic<int> lines_seen{0};
  std::atomic<bool> stop{false};
  std::thread device([&] {
    std::string buf;
    char c;
    while (!stop) {
      fd_set set;
      FD_ZERO(&set);
      FD_SET(master, &set);
      timeval tv{0, 20000};
      if (select(master + 1, &set, nullptr, nullptr, &tv) <= 0) continue;
      if (read(master, &c, 1) != 1) break;
      if (c == '\r') continue;
      if (c != '\n') {
        buf += c;
        continue;
      }
      std::vector<double> x;
      std::string_view rest = buf;
      while (true) {
        const auto comma = rest.find(',');
        x.push_back(parse_double(rest.substr(0, comma)).value_or(0.0));
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      const int n = ++lines_seen;
      const auto reply = "P," + std::to_string(class_index(tree.predict(x))) + ",T," + std::to_string(10 + n % 7) +
                         ",N,100000\n";
      if (write(master, reply.data(), reply.size()) < 0) break;
      buf.clear();
    }
  });

  SUBCASE("one response per record and a consistent summary") {
    const auto out = ws.dir.path() / "ss";
    const auto r = cli({"serial-send", p(ws.flows), "--model", p(tr / "model.tree"), "--port", name,
                        "--max-records", "40", "--out", p(out)});
    REQUIRE(r.exit_code == 0);
    CHECK(lines_seen == 40);
    std::istringstream in(r.output);
    std::string line;
    std::getline(in, line);
    CHECK(line == "record,predicted,expected,elapsed_us,iterations");
    double sum = 0;
    int rows = 0;
    while (std::getline(in, line) && line.rfind("summary", 0) != 0) {
      const auto last = line.rfind(',');
      const auto prev = line.rfind(',', last - 1);
      sum += std::stod(line.substr(prev + 1, last - prev - 1));
      ++rows;
    }
    CHECK(rows == 40);
    const double mean = manifest(out)["outputs"]["mean_elapsed_us"].get<double>();
    CHECK(mean == doctest::Approx(sum / rows).epsilon(1e-12));
  }
  SUBCASE("feature-count mismatch aborts before sending") {
    const auto r = cli({"serial-send", p(ws.toy), "--model", p(tr / "model.tree"), "--port", name, "--out",
                        p(ws.dir.path() / "mm")});
    CHECK(r.exit_code == 1);
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    CHECK(lines_seen == 0);
  }
  stop = true;
  device.join();
  close(slave);
  close(master);
}

TEST_CASE("help and version") {
  CHECK(cli({"--help"}).exit_code == 0);
  CHECK(cli({"--version"}).exit_code == 0);
  CHECK(cli({}).exit_code == 2);
  CHECK(cli({"frobnicate"}).exit_code == 2);
}
