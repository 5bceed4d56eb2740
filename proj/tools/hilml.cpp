#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "hilml/cli.hpp"
#include "hilml/demo.hpp"
#include "hilml/service.hpp"

int main(int argc, char** argv) {
  CLI::App app{"hilml: interactive AutoML engine"};
  app.require_subcommand(1);

  hilml::RunOptions run;
  std::string corpus;
  auto* run_cmd = app.add_subcommand("run", "search a dataset headlessly and write results");
  run_cmd->add_option("data", run.data, "dataset CSV")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("problem", run.problem, "problem JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("out", run.out, "output directory")->required();
  run_cmd->add_option("--corpus", corpus, "corpus directory for augmentation candidates");
  run_cmd->add_option("--keywords", run.keywords, "augmentation search keywords");
  run_cmd->add_option("--seed", run.seed, "search seed");
  run_cmd->add_option("--workers", run.workers, "parallel evaluations (0 = all cores)");

  hilml::ServiceConfig config = hilml::config_from_env();
  std::string listen = std::getenv("HILML_LISTEN") ? std::getenv("HILML_LISTEN") : "127.0.0.1:8080";
  std::string serve_corpus = config.corpus_dir ? config.corpus_dir->string() : "";
  std::string sessions = config.session_root.string();
  auto* serve_cmd = app.add_subcommand("serve", "serve the HTTP session API");
  serve_cmd->add_option("--listen", listen, "host:port");
  serve_cmd->add_option("--corpus", serve_corpus, "corpus directory");
  serve_cmd->add_option("--sessions", sessions, "session root directory");
  serve_cmd->add_option("--seed", config.seed, "default search seed");
  serve_cmd->add_option("--workers", config.workers, "parallel evaluations per search");

  std::string demo_out;
  std::uint64_t demo_seed = hilml::kDemoSeed;
  auto* demo_cmd = app.add_subcommand("generate-demo", "write the synthetic collisions demo and its corpus");
  demo_cmd->add_option("out", demo_out, "output directory")->required();
  demo_cmd->add_option("--seed", demo_seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      if (!corpus.empty()) run.corpus = corpus;
      return hilml::run_headless(run, std::cerr);
    }
    if (*demo_cmd) {
      hilml::write_demo(demo_out, demo_seed);
      return 0;
    }
    config.session_root = sessions;
    if (!serve_corpus.empty()) config.corpus_dir = serve_corpus;
    const auto [host, port] = hilml::parse_listen(listen);
    hilml::Service service(config);
    hilml::HttpServer server(service);
    std::cerr << "listening on " << host << ":" << port << "\n";
    if (!server.run(host, port)) {
      std::cerr << "error: cannot listen on " << listen << "\n";
      return 1;
    }
  } catch (const hilml::Error& e) {
    std::cerr << "error: " << hilml::error_code_name(e.code()) << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
