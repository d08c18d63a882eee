#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "scaleflow/flo_io.hpp"
#include "scaleflow/image_io.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* env = std::getenv("SCALEFLOW_CLI");
  REQUIRE_MESSAGE(env != nullptr, "SCALEFLOW_CLI must point at the binary");
  return env;
}

int run(const std::string& args) {
  std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("help exits zero on every subcommand") {
  CHECK(run("--help") == 0);
  for (const char* sub : {"detect", "propagate", "flow", "eval", "bench", "noise"})
    CHECK(run(std::string(sub) + " --help") == 0);
}

TEST_CASE("unknown flags and missing args are usage errors") {
  CHECK(run("") != 0);
  CHECK(run("detect") == 2);
  CHECK(run("flow one.png") == 2);
}

TEST_CASE("detect writes keypoints and handles bad inputs") {
  std::string dir = testsup::temp_dir("cli");
  std::string img = dir + "/t.png";
  scaleflow::save_png(testsup::rich_texture(96, 72, 12), img);
  std::string out = dir + "/kp.txt";
  CHECK(run("detect " + img + " -o " + out) == 0);
  std::string body = slurp(out);
  CHECK(!body.empty());
  // five columns per line
  std::istringstream line(body.substr(0, body.find('\n')));
  double a, b, c, d, e;
  CHECK((line >> a >> b >> c >> d >> e));

  // constant image: empty file, still success
  scaleflow::Image flat = scaleflow::Image::zeros(64, 64);
  std::fill(flat.data.begin(), flat.data.end(), 0.5f);
  scaleflow::save_png(flat, dir + "/flat.png");
  CHECK(run("detect " + dir + "/flat.png -o " + dir + "/empty.txt") == 0);
  CHECK(slurp(dir + "/empty.txt").empty());

  CHECK(run("detect /no/such/file.png -o " + out) == 2);
  fs::remove_all(dir);
}

TEST_CASE("propagate emits scale maps per method") {
  std::string dir = testsup::temp_dir("cli");
  std::string img = dir + "/a.png";
  scaleflow::save_png(testsup::rich_texture(80, 64, 9), img);
  CHECK(run("propagate " + img + " --method geo --out " + dir) == 0);
  CHECK(fs::exists(dir + "/a.pfm"));
  CHECK(fs::exists(dir + "/a_scales.png"));
  scaleflow::Image smap = scaleflow::load_pfm(dir + "/a.pfm");
  CHECK(smap.width == 80);
  for (float v : smap.data) CHECK(v > 0.0f);

  // match needs two images
  CHECK(run("propagate " + img + " --method match --out " + dir) == 2);
  std::string img_b = dir + "/b.png";
  scaleflow::save_png(testsup::rich_texture(80, 64, 9), img_b);
  CHECK(run("propagate " + img + " " + img_b + " --method match --out " + dir) == 0);
  CHECK(fs::exists(dir + "/b.pfm"));
  fs::remove_all(dir);
}

TEST_CASE("flow on identical inputs writes a zero flo plus artifacts") {
  std::string dir = testsup::temp_dir("cli");
  std::string img = dir + "/a.png";
  scaleflow::save_png(testsup::rich_texture(64, 48, 77), img);
  CHECK(run("flow " + img + " " + img + " --method dsift --flow-levels 2 --out " +
            dir + "/out") == 0);
  CHECK(fs::exists(dir + "/out/hallucination.png"));
  scaleflow::FlowField flow = scaleflow::load_flo(dir + "/out/flow.flo");
  for (std::size_t i = 0; i < flow.u.size(); ++i) {
    CHECK(flow.u[i] == 0.0f);
    CHECK(flow.v[i] == 0.0f);
  }
  CHECK(run("flow /missing.png " + img + " --out " + dir) == 2);
  fs::remove_all(dir);
}

TEST_CASE("eval prints metrics and appends CSV rows") {
  std::string dir = testsup::temp_dir("cli");
  scaleflow::FlowField flow = scaleflow::FlowField::zeros(10, 10);
  scaleflow::save_flo(flow, dir + "/f.flo");
  std::string csv = dir + "/e.csv";
  CHECK(run("eval " + dir + "/f.flo " + dir + "/f.flo --csv " + csv) == 0);
  CHECK(run("eval " + dir + "/f.flo " + dir + "/f.flo --csv " + csv) == 0);
  std::string body = slurp(csv);
  // header plus two appended rows
  CHECK(std::count(body.begin(), body.end(), '\n') == 3);

  scaleflow::save_flo(scaleflow::FlowField::zeros(11, 10), dir + "/g.flo");
  CHECK(run("eval " + dir + "/f.flo " + dir + "/g.flo") == 2);
  fs::remove_all(dir);
}

TEST_CASE("noise study is reproducible and plots") {
  std::string dir = testsup::temp_dir("cli");
  std::string img = dir + "/n.png";
  scaleflow::save_png(testsup::rich_texture(40, 32, 15), img);
  std::string args = "noise " + img +
                     " --fractions 0,0.5 --trials 1 --seed 11 --flow-levels 1 "
                     "--radius 2 --iterations 6 -o ";
  CHECK(run(args + dir + "/a.csv --plot " + dir + "/p.png") == 0);
  CHECK(run(args + dir + "/b.csv") == 0);
  CHECK(slurp(dir + "/a.csv") == slurp(dir + "/b.csv"));
  CHECK(fs::exists(dir + "/p.png"));
  std::string body = slurp(dir + "/a.csv");
  CHECK(std::count(body.begin(), body.end(), '\n') == 3);  // header + 2 rows
  CHECK(run("noise /missing.png") == 2);
  fs::remove_all(dir);
}

TEST_CASE("bench on a tiny synthetic dataset emits a CSV") {
  std::string dir = testsup::temp_dir("cli");
  fs::create_directories(dir + "/data/p1");
  scaleflow::Image img = testsup::rich_texture(70, 56, 2);
  scaleflow::save_png(img, dir + "/data/p1/frame10.png");
  scaleflow::save_png(testsup::shift_image(img, 1.0, 0.0), dir + "/data/p1/frame11.png");
  scaleflow::FlowField gt = scaleflow::FlowField::zeros(70, 56);
  std::fill(gt.u.begin(), gt.u.end(), 1.0f);
  scaleflow::save_flo(gt, dir + "/data/p1/flow10.flo");
  CHECK(run("bench " + dir + "/data --methods dsift --flow-levels 2 --iterations 6"
            " -o " + dir + "/r.csv") == 0);
  std::string body = slurp(dir + "/r.csv");
  CHECK(body.rfind("pair,method,", 0) == 0);
  CHECK(body.find("p1,dsift,") != std::string::npos);
  CHECK(run("bench " + dir + "/nodata") == 2);
  fs::remove_all(dir);
}

TEST_CASE("config file provides defaults that flags override") {
  std::string dir = testsup::temp_dir("cli");
  std::string img = dir + "/c.png";
  scaleflow::save_png(testsup::rich_texture(48, 40, 30), img);
  std::string cfg = dir + "/cfg.txt";
  {
    std::ofstream out(cfg);
    out << "peak-threshold=0.5\n";  // absurdly high: nothing detected
  }
  std::string kp_cfg = dir + "/kc.txt";
  CHECK(run("detect " + img + " --config " + cfg + " -o " + kp_cfg) == 0);
  CHECK(slurp(kp_cfg).empty());
  // flag beats file
  std::string kp_flag = dir + "/kf.txt";
  CHECK(run("detect " + img + " --config " + cfg + " --peak-threshold 0.01 -o " +
            kp_flag) == 0);
  CHECK(!slurp(kp_flag).empty());
  fs::remove_all(dir);
}
