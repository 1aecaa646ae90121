// End-to-end CLI contract tests; the binary path arrives in $MOMA_CLI.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "moma/report.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli() {
  const char* path = std::getenv("MOMA_CLI");
  REQUIRE_MESSAGE(path != nullptr, "MOMA_CLI must point at the binary");
  return path;
}

int run(const std::string& args, std::string* output = nullptr) {
  const fs::path log = fs::temp_directory_path() / "moma_cli_out.txt";
  const std::string command =
      cli() + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(command.c_str());
  if (output) {
    std::ifstream in(log);
    std::stringstream buffer;
    buffer << in.rdbuf();
    *output = buffer.str();
  }
  return WEXITSTATUS(status);
}

fs::path workspace() {
  const auto dir = fs::temp_directory_path() / "moma_cli_test";
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const std::string& name, const std::string& extra = "",
                      const std::string& regime = "same",
                      const std::string& classes = "3") {
  const auto dir = workspace();
  const auto path = dir / name;
  std::ofstream out(path);
  out << "[data]\n"
         "regime = " << regime << "\n"
         "input_dim = 6\n"
         "source_classes = 3\n"
         "target_classes = " << classes << "\n"
         "cluster_spread = 0.8\n"
         "target_train = 32\n"
         "target_val = 16\n"
         "target_test = 32\n"
         "source_ratio = 4\n"
         "[model]\n"
         "embed_dim = 8\n"
         "proj_dim = 8\n"
         "heads = 4\n"
         "encoder_hidden = 8\n"
         "[distill]\n"
         "queue_size = 16\n"
         "[optim]\n"
         "batch_size = 8\n"
         "epochs = 2\n"
         "seed = 21\n"
         "[io]\n"
         "out_dir = " << (dir / (name + ".out")).string() << "\n"
      << extra;
  return path;
}

std::vector<std::string> data_lines(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  }
  return lines;
}

std::string file_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

TEST_CASE("pretrain: smoke contract, artifacts, determinism") {
  const auto config = write_config("pretrain.cfg");
  const auto out_dir = fs::path(config.string() + ".out");
  fs::remove_all(out_dir);

  std::string output;
  CHECK(run("pretrain -c " + config.string(), &output) == 0);
  CHECK(fs::exists(out_dir / "teacher.ckpt"));
  CHECK(fs::exists(out_dir / "report.txt"));

  const auto report = moma::read_report(out_dir / "report.txt");
  CHECK(report.count("accuracy") == 1);
  CHECK(report.at("tag") == "TC");

  // Same config + seed twice -> identical metrics files.
  const std::string first = file_text(out_dir / "report.txt");
  CHECK(run("pretrain -c " + config.string()) == 0);
  CHECK(file_text(out_dir / "report.txt") == first);
}

TEST_CASE("unknown config keys exit 2 naming the key and line") {
  const auto config = write_config("typo.cfg", "[distill]\ntaus = 0.07\n");
  std::string output;
  CHECK(run("pretrain -c " + config.string(), &output) == 2);
  CHECK(output.find("taus") != std::string::npos);
  CHECK(output.find("line") != std::string::npos);
}

TEST_CASE("distill: gamma columns per regime and exact total composition") {
  const auto teacher_config = write_config("teacher.cfg");
  const auto teacher_out = fs::path(teacher_config.string() + ".out");
  fs::remove_all(teacher_out);
  REQUIRE(run("pretrain -c " + teacher_config.string()) == 0);
  const std::string teacher_ckpt = (teacher_out / "teacher.ckpt").string();

  struct Case {
    std::string regime;
    std::string classes;
    std::string expected_gamma;
  };
  for (const Case& c : {Case{"same", "3", "1"}, Case{"relevant", "4", "0"},
                        Case{"irrelevant", "3", "0"}}) {
    const auto config =
        write_config("distill_" + c.regime + ".cfg", "", c.regime, c.classes);
    const auto out_dir = fs::path(config.string() + ".out");
    fs::remove_all(out_dir);
    std::string output;
    const int code =
        run("distill -c " + config.string() + " --teacher " + teacher_ckpt,
            &output);
    CHECK_MESSAGE(code == 0, output);
    CHECK(fs::exists(out_dir / "student.ckpt"));
    CHECK(fs::exists(out_dir / "inference.ckpt"));

    const auto rows = data_lines(out_dir / "losses.csv");
    REQUIRE(rows.size() > 1);
    CHECK(rows[0] == "step,ce,nce,kl,gamma,total");
    for (std::size_t i = 1; i < rows.size(); ++i) {
      std::stringstream ss(rows[i]);
      std::string step, ce, nce, kl, gamma, total;
      std::getline(ss, step, ',');
      std::getline(ss, ce, ',');
      std::getline(ss, nce, ',');
      std::getline(ss, kl, ',');
      std::getline(ss, gamma, ',');
      std::getline(ss, total, ',');
      CHECK(gamma == c.expected_gamma);
      CHECK(!kl.empty());  // populated in every regime
      const double recomposed = std::stod(ce) + std::stod(nce) +
                                std::stod(gamma) * std::stod(kl);
      CHECK(std::abs(std::stod(total) - recomposed) <= 1e-12);
    }
  }
}

TEST_CASE("finetune tags runs and echoes the config verbatim") {
  const auto config = write_config("ft.cfg");
  const auto out_dir = fs::path(config.string() + ".out");
  fs::remove_all(out_dir);
  REQUIRE(run("finetune -c " + config.string()) == 0);
  const auto report = moma::read_report(out_dir / "report.txt");
  CHECK(report.at("tag") == "FT_None");
  CHECK(report.at("pretrained") == "none");

  // Config echo: every raw line appears in the artifact header.
  const std::string artifact = file_text(out_dir / "report.txt");
  std::ifstream cfg(config);
  std::string line;
  while (std::getline(cfg, line)) {
    if (line.empty()) continue;
    CHECK(artifact.find(line) != std::string::npos);
  }

  const auto teacher_out = fs::path(config.string() + ".teacher");
  REQUIRE(run("pretrain -c " + config.string() + " --out " +
              teacher_out.string()) == 0);
  REQUIRE(run("finetune -c " + config.string() + " --init " +
              (teacher_out / "teacher.ckpt").string()) == 0);
  CHECK(moma::read_report(out_dir / "report.txt").at("tag") == "FT_Teacher");
}

TEST_CASE("eval: deterministic reports and embedding export shape") {
  const auto config = write_config("eval.cfg");
  const auto out_dir = fs::path(config.string() + ".out");
  fs::remove_all(out_dir);
  REQUIRE(run("finetune -c " + config.string()) == 0);
  const std::string ckpt = (out_dir / "inference.ckpt").string();

  std::string once, twice;
  CHECK(run("eval -c " + config.string() + " --checkpoint " + ckpt, &once) ==
        0);
  CHECK(run("eval -c " + config.string() + " --checkpoint " + ckpt, &twice) ==
        0);
  CHECK(once == twice);

  const auto emb_path = out_dir / "emb.csv";
  CHECK(run("eval -c " + config.string() + " --checkpoint " + ckpt +
            " --export-embeddings " + emb_path.string()) == 0);
  const auto rows = data_lines(emb_path);
  REQUIRE(!rows.empty());
  CHECK(rows[0].rfind("model,split,label,dim0", 0) == 0);
  CHECK(rows.size() == 1 + 32);  // header + test split rows

  const auto corr_path = out_dir / "corr.csv";
  CHECK(run("eval -c " + config.string() + " --checkpoint " + ckpt +
            " --export-correlations " + corr_path.string()) == 0);
  CHECK(!data_lines(corr_path).empty());
}

TEST_CASE("gradcheck passes on a tiny config and honors the failure hook") {
  const auto config = write_config("gc.cfg", "", "same", "3");
  std::string output;
  CHECK(run("gradcheck -c " + config.string() + " --seeds 2", &output) == 0);
  CHECK(output.find("student.enc.0.w") != std::string::npos);
  CHECK(output.find("teacher.att.wo") != std::string::npos);
  CHECK(output.find("FAIL") == std::string::npos);

  CHECK(run("gradcheck -c " + config.string() +
            " --seeds 1 --inject-grad-error") == 4);
}

TEST_CASE("compare aggregates tags and rejects a missing report") {
  const auto config = write_config("cmp.cfg");
  const auto out_a = fs::path(config.string() + ".a");
  const auto out_b = fs::path(config.string() + ".b");
  REQUIRE(run("finetune -c " + config.string() + " --out " + out_a.string()) ==
          0);
  REQUIRE(run("finetune -c " + config.string() + " --seed 22 --out " +
              out_b.string()) == 0);

  std::string output;
  CHECK(run("compare " + (out_a / "report.txt").string() + " " +
            (out_b / "report.txt").string(),
            &output) == 0);
  CHECK(output.find("FT_None") != std::string::npos);
  CHECK(output.find("+/-") != std::string::npos);

  std::string missing_output;
  CHECK(run("compare " + (out_a / "report.txt").string() + " /nonexistent.txt",
            &missing_output) != 0);
  CHECK(missing_output.find("/nonexistent.txt") != std::string::npos);
}

TEST_CASE("compare mean and std match a scripted oracle") {
  const auto config = write_config("cmp5.cfg");
  std::vector<double> accs;
  std::vector<std::string> reports;
  for (int seed = 31; seed < 36; ++seed) {
    const auto out = fs::path(config.string() + ".s" + std::to_string(seed));
    REQUIRE(run("finetune -c " + config.string() + " --seed " +
                std::to_string(seed) + " --out " + out.string()) == 0);
    const auto report = moma::read_report(out / "report.txt");
    accs.push_back(std::stod(report.at("accuracy")));
    reports.push_back((out / "report.txt").string());
  }
  double mean = 0.0;
  for (double a : accs) mean += a;
  mean /= static_cast<double>(accs.size());
  double var = 0.0;
  for (double a : accs) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / static_cast<double>(accs.size() - 1));

  const auto csv_path = workspace() / "compare.csv";
  std::string args = "compare";
  for (const auto& report : reports) args += " " + report;
  args += " --csv " + csv_path.string();
  CHECK(run(args) == 0);

  const auto rows = data_lines(csv_path);
  REQUIRE(rows.size() == 2);
  std::stringstream ss(rows[1]);
  std::string field;
  std::vector<std::string> fields;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  REQUIRE(fields.size() >= 5);
  CHECK(fields[0] == "FT_None");
  CHECK(std::stoul(fields[2]) == 5);
  CHECK(std::abs(std::stod(fields[3]) - mean) < 1e-12);
  CHECK(std::abs(std::stod(fields[4]) - sd) < 1e-12);
}
