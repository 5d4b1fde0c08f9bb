// External restorer for synthetic datasets. Invoked by the trainer as
//   restore_sim --data DIR [options] IN_DIR OUT_DIR
// it reads every <frame>_<shift>.ppm in IN_DIR and writes the restored frame
// under the same name in OUT_DIR.

#include "splatdrive/image_io.hpp"
#include "splatdrive/restore_sim.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fs = std::filesystem;
using namespace splatdrive;

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"Ground-truth-backed restorer for synthetic datasets", "restore_sim"};
  std::string data, in_dir, out_dir;
  RestoreSimConfig cfg;
  int workers = 1;
  app.add_option("--data", data, "Dataset directory holding scene.cfg")->required()->check(CLI::ExistingDirectory);
  app.add_option("--mix", cfg.mix, "Weight of the degraded ground truth")->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  app.add_option("--blur", cfg.blur_sigma, "Blur sigma in pixels")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  app.add_option("--gain", cfg.gain, "Brightness gain")->check(CLI::NonNegativeNumber)->capture_default_str();
  app.add_option("--pose-bias", cfg.pose_bias, "Fractional overshoot of the lateral shift used for the target")
      ->capture_default_str();
  app.add_option("--workers", workers, "Ray tracer threads")->check(CLI::PositiveNumber);
  app.add_option("in", in_dir, "Directory of rendered frames")->required()->check(CLI::ExistingDirectory);
  app.add_option("out", out_dir, "Directory for restored frames")->required();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const Dataset ds = load_dataset(data);
    if (!ds.spec) throw InvalidInput(data + " has no scene.cfg");
    const SimulatedRestorer restorer(generate(*ds.spec), cfg, workers);
    fs::create_directories(out_dir);
    int count = 0;
    for (const auto& entry : fs::directory_iterator(in_dir)) {
      if (entry.path().extension() != ".ppm") continue;
      const std::string stem = entry.path().stem().string();
      const auto key = parse_restore_item_name(stem);
      if (!key) throw InvalidInput("unexpected file name " + entry.path().filename().string());
      const Image restored = restorer.restore_one(read_ppm(entry.path()), key->first, key->second);
      write_ppm(fs::path(out_dir) / entry.path().filename(), restored);
      ++count;
    }
    std::cout << "restored " << count << " frames\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
