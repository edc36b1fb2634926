/*
 * Copyright 2026 The UltraZoom Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// uz: command line front end. Exit codes: 0 ok, 2 config error, 3 stage failure.

// Before httplib: <resolv.h> defines a `_res` macro that breaks Eigen.
#include "ultrazoom/pipeline.hpp"

#include <httplib.h>

#include <CLI11.hpp>
#include <iostream>
#include <sstream>

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kStageFailure = 3;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string output;
  int threads = 0;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "pipeline config (JSON)")->required();
  cmd->add_option("--set", c.overrides, "override a config key: key.path=value");
  cmd->add_option("-o,--output", c.output, "output directory (overrides config)");
  cmd->add_option("-t,--threads", c.threads, "worker threads (default: UZ_THREADS or all cores)");
  cmd->add_flag("--deterministic", c.deterministic, "single worker; bit-exact reference mode");
}

uz::PipelineConfig load(const Common& c) {
  auto overrides = c.overrides;
  // -o is relative to the working directory, not to the config file.
  if (!c.output.empty())
    overrides.push_back("output=" + nlohmann::json(std::filesystem::absolute(c.output).string()).dump());
  if (c.threads > 0) overrides.push_back("threads=" + std::to_string(c.threads));
  if (c.deterministic) overrides.push_back("threads=1");
  return uz::load_config(c.config, overrides);
}

int report(const std::string& stage, const std::exception& e) {
  std::cerr << "uz " << stage << ": " << e.what();
  if (const auto* ue = dynamic_cast<const uz::Error*>(&e)) {
    if (ue->index() >= 0) std::cerr << " (index " << ue->index() << ")";
    std::cerr << "\n";
    return ue->code() == uz::Errc::Config ? kConfigError : kStageFailure;
  }
  std::cerr << "\n";
  return kStageFailure;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

int serve(const std::string& root, const std::string& host, int port) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw uz::Error(uz::Errc::Config, "serve root not found: " + root);
  httplib::Server svr;
  svr.set_pre_routing_handler([](const httplib::Request& req, httplib::Response& res) {
    if (req.method == "GET" || req.method == "HEAD") return httplib::Server::HandlerResponse::Unhandled;
    res.status = 405;
    res.set_header("Allow", "GET, HEAD");
    res.set_content("method not allowed\n", "text/plain");
    return httplib::Server::HandlerResponse::Handled;
  });
  svr.set_file_extension_and_mimetype_mapping("dzi", "application/xml");
  // Index of the pyramids under the root, for the viewer's layer picker.
  svr.Get("/pyramids.json", [root](const httplib::Request&, httplib::Response& res) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.path().extension() == ".dzi") list.push_back(fs::relative(e.path(), root).generic_string());
    std::sort(list.begin(), list.end());
    res.set_content(list.dump(), "application/json");
  });
  if (!svr.set_mount_point("/", root)) throw uz::Error(uz::Errc::Config, "cannot serve " + root);
  std::cerr << "serving " << root << " on http://" << host << ":" << port << "\n";
  if (!svr.listen(host, port))
    throw uz::Error(uz::Errc::Io, "cannot listen on " + host + ":" + std::to_string(port));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uz: reference-based gigapixel zoom pipeline"};
  app.set_version_flag("--version", uz::kVersion);
  app.require_subcommand(1);

  Common common;
  std::string stage;
  std::function<int()> action;

  auto staged = [&](const char* name, const char* help, auto fn) {
    auto* cmd = app.add_subcommand(name, help);
    add_common(cmd, common);
    cmd->callback([&, name, fn] {
      stage = name;
      action = [&, fn] {
        const uz::PipelineConfig cfg = load(common);
        fn(cfg);
        return kOk;
      };
    });
    return cmd;
  };
  staged("register", "track videos, chain transforms, write registration.json and overlay.png",
         [](const uz::PipelineConfig& c) { uz::stage_register(c); });
  staged("build-dataset", "write aligned HR/LR pairs and an alignment report",
         [](const uz::PipelineConfig& c) { uz::stage_build_dataset(c); });
  staged("enhance-bank", "build the exemplar bank from the dataset",
         [](const uz::PipelineConfig& c) { uz::stage_enhance_bank(c); });
  staged("mosaic", "run tiled enhancement into a streamed canvas",
         [](const uz::PipelineConfig& c) { uz::stage_mosaic(c); });
  staged("metrics", "LR-MAE, Frechet and kernel distances of the canvas",
         [](const uz::PipelineConfig& c) { uz::stage_metrics(c); });
  staged("zoom", "end to end: register, dataset, bank, mosaic, pyramid, metrics",
         [](const uz::PipelineConfig& c) { uz::stage_zoom(c); });

  // pyramid: from a config, or standalone from a canvas directory / PNG.
  auto* pyr = app.add_subcommand("pyramid", "build Deep Zoom pyramids");
  std::string pyr_input, pyr_out;
  uz::PyramidParams pyr_params;
  pyr->add_option("-c,--config", common.config, "pipeline config (JSON)");
  pyr->add_option("--set", common.overrides, "override a config key: key.path=value");
  pyr->add_option("-o,--output", common.output, "output directory (overrides config)");
  pyr->add_option("-t,--threads", common.threads, "worker threads");
  pyr->add_option("--input", pyr_input, "canvas band directory or PNG (standalone mode)");
  pyr->add_option("--out", pyr_out, "descriptor path, e.g. out/name.dzi (standalone mode)");
  pyr->add_option("--tile-size", pyr_params.tile_size, "tile size")->capture_default_str();
  pyr->add_option("--overlap", pyr_params.overlap, "tile overlap")->capture_default_str();
  pyr->add_option("--format", pyr_params.format, "png or jpeg")->capture_default_str();
  pyr->callback([&] {
    stage = "pyramid";
    action = [&] {
      if (!common.config.empty()) {
        uz::stage_pyramid(load(common));
        return kOk;
      }
      if (pyr_input.empty() || pyr_out.empty())
        throw uz::Error(uz::Errc::Config, "pyramid needs --config, or --input and --out");
      pyr_params.threads = common.threads;
      if (std::filesystem::is_directory(pyr_input))
        uz::build_pyramid(uz::BandReader(pyr_input), pyr_out, pyr_params);
      else if (std::filesystem::exists(pyr_input))
        uz::build_pyramid(uz::read_png(pyr_input, 3), pyr_out, pyr_params);
      else
        throw uz::Error(uz::Errc::Config, "pyramid input not found: " + pyr_input);
      return kOk;
    };
  });

  auto* fix = app.add_subcommand("make-fixture", "render a synthetic capture with ground truth");
  std::string fix_out, fix_zooms = "1";
  uz::FixtureSpec spec;
  fix->add_option("--out", fix_out, "output directory")->required();
  fix->add_option("--size", spec.width, "image side length")->capture_default_str();
  fix->add_option("--zooms", fix_zooms, "close-up zooms, comma separated (master px per px)")
      ->capture_default_str();
  fix->add_option("--full-zoom", spec.full_zoom, "full view zoom")->capture_default_str();
  fix->add_option("--seed", spec.seed, "texture and wobble seed")->capture_default_str();
  fix->add_option("-t,--threads", common.threads, "worker threads");
  fix->callback([&] {
    stage = "make-fixture";
    action = [&] {
      spec.height = spec.width;
      try {
        spec.closeup_zoom = parse_list(fix_zooms);
      } catch (const std::exception&) {
        throw uz::Error(uz::Errc::Config, "--zooms must be a comma separated list of numbers");
      }
      uz::make_fixture_dir(spec, fix_out, uz::resolve_threads(common.threads));
      std::cerr << "fixture written to " << fix_out << " (config.json ready for `uz zoom`)\n";
      return kOk;
    };
  });

  auto* srv = app.add_subcommand("serve", "static GET-only file server for the viewer");
  std::string root = ".", host = "127.0.0.1";
  int port = 8080;
  srv->add_option("--root", root, "directory to serve")->capture_default_str();
  srv->add_option("--host", host, "bind address")->capture_default_str();
  srv->add_option("--port", port, "port")->capture_default_str();
  srv->callback([&] {
    stage = "serve";
    action = [&] { return serve(root, host, port); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }
  try {
    return action();
  } catch (const std::exception& e) {
    return report(stage, e);
  }
}
