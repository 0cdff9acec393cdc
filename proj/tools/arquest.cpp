// arquest: serve | geo label | synth | eval

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "arquest/api/service.hpp"
#include "arquest/eval.hpp"
#include "arquest/geo.hpp"
#include "arquest/kb.hpp"
#include "arquest/synth.hpp"

namespace {

void write_file(const std::string& path, const std::string& text) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw arquest::Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw arquest::Error("failed writing '" + path + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive underwriting questionnaire engine"};
  app.require_subcommand(1);

  std::string serve_config;
  auto* serve = app.add_subcommand("serve", "run the HTTP session service");
  serve->add_option("--config", serve_config, "service config JSON")->required()->check(CLI::ExistingFile);

  auto* geo = app.add_subcommand("geo", "regional indicator tools");
  geo->require_subcommand(1);
  std::string geo_in, geo_defs, geo_out;
  int geo_k = 5;
  auto* label = geo->add_subcommand("label", "label a municipality indicator CSV with ordinal levels");
  label->add_option("--in", geo_in, "indicator CSV")->required()->check(CLI::ExistingFile);
  label->add_option("--defs", geo_defs, "indicator definitions JSON")->required()->check(CLI::ExistingFile);
  label->add_option("--out", geo_out, "labelled region profiles JSON")->required();
  label->add_option("-k", geo_k, "number of clusters")->check(CLI::Range(1, 5));

  std::string synth_config, synth_kb, synth_geo, synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic applicant cohort");
  synth->add_option("--config", synth_config, "cohort config JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("--kb", synth_kb, "knowledge base JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("--geo", synth_geo, "labelled region profiles JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "cohort JSON Lines")->required();

  std::string eval_cohort, eval_kb, eval_geo, eval_approaches = "traditional,dynamic-mock", eval_out, eval_summary,
                                                eval_remote;
  auto* eval = app.add_subcommand("eval", "compare questionnaire approaches over a cohort");
  eval->add_option("--cohort", eval_cohort, "cohort JSON Lines")->required()->check(CLI::ExistingFile);
  eval->add_option("--kb", eval_kb, "knowledge base JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--geo", eval_geo, "labelled region profiles JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--approaches", eval_approaches, "comma-separated approaches");
  eval->add_option("--out", eval_out, "report JSON")->required();
  eval->add_option("--summary", eval_summary, "plain-text summary table");
  eval->add_option("--remote", eval_remote, "remote gateway settings JSON")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      auto service = arquest::api::Service::from_config(arquest::api::load_service_config(serve_config));
      service->listen();
    } else if (*label) {
      auto table = arquest::ingest_indicators(geo_in, arquest::load_indicator_defs(geo_defs));
      write_file(geo_out, arquest::region_index_to_json(arquest::region_profiles(table, geo_k)).dump(2) + "\n");
    } else if (*synth) {
      auto config = arquest::load_cohort_config(synth_config);
      auto cohort = arquest::generate_cohort(config, arquest::load_knowledge_base(synth_kb),
                                             arquest::load_region_index(synth_geo), arquest::load_pools(config));
      write_file(synth_out, arquest::cohort_to_jsonl(cohort));
      std::fprintf(stderr, "wrote %zu applicants to %s\n", cohort.size(), synth_out.c_str());
    } else if (*eval) {
      arquest::ExperimentConfig config;
      if (!eval_remote.empty()) config.remote = arquest::llm::remote_config_from_json(arquest::read_json_file(eval_remote));
      auto records = arquest::run_experiment(arquest::load_cohort(eval_cohort), arquest::load_knowledge_base(eval_kb),
                                             arquest::load_region_index(eval_geo),
                                             arquest::parse_approaches(eval_approaches), config);
      auto report = arquest::build_report(records);
      write_file(eval_out, arquest::to_json(report).dump(2) + "\n");
      const auto table = arquest::summary_table(report);
      if (!eval_summary.empty()) write_file(eval_summary, table);
      std::cout << table;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
