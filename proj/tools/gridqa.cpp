#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridqa/harness.hpp"

using namespace gridqa;

int main(int argc, char** argv) {
    CLI::App app{"gridqa: QA-record pipeline and evaluation harness for gridded projections"};
    app.require_subcommand(1);

    std::string config_path = "gridqa.toml";
    std::string out_dir;
    std::string records_path;
    std::string replay_path;
    std::string embedder;
    std::string export_path;
    std::string echo_fixture_out;
    std::vector<std::string> report_files;
    long seed = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "harness config file");
        cmd->add_option("--out", out_dir, "output directory override");
        cmd->add_option("--seed", seed, "seed override (synth/build/split)");
    };

    auto* synth = app.add_subcommand("synth", "write a seeded synthetic dataset");
    add_common(synth);
    auto* build = app.add_subcommand("build", "build QA records from the dataset");
    add_common(build);
    auto* split = app.add_subcommand("split", "split records into train/test");
    add_common(split);
    split->add_option("--records", records_path, "records JSONL (default <out>/records.jsonl)");
    auto* exp = app.add_subcommand("export", "export training JSONL");
    add_common(exp);
    exp->add_option("--records", records_path, "records JSONL (default <out>/train.jsonl)");
    exp->add_option("--to", export_path, "output path");
    auto* eval = app.add_subcommand("eval", "evaluate a model over test records");
    add_common(eval);
    eval->add_option("--records", records_path, "records JSONL (default <out>/test.jsonl)");
    eval->add_option("--replay", replay_path, "replay fixture JSONL instead of the network");
    eval->add_option("--embedder", embedder, "lexical|remote");
    eval->add_option("--write-echo-fixture", echo_fixture_out,
                     "write a reference-echo replay fixture and exit");
    auto* report = app.add_subcommand("report", "side-by-side comparison of report files");
    report->add_option("--out", out_dir, "output directory override");
    report->add_option("reports", report_files, "report JSON files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(report)) {
            return cmd_report(report_files, out_dir.empty() ? "out" : out_dir);
        }
        HarnessConfig cfg = HarnessConfig::load(config_path);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed >= 0) {
            cfg.synth_seed = static_cast<std::uint64_t>(seed);
            cfg.build_seed = static_cast<std::uint64_t>(seed);
            cfg.split_seed = static_cast<std::uint64_t>(seed);
        }
        if (!replay_path.empty()) cfg.replay_path = replay_path;
        if (!embedder.empty()) {
            if (embedder != "lexical" && embedder != "remote")
                throw ConfigError("--embedder must be lexical or remote");
            cfg.embedder = embedder;
        }
        if (app.got_subcommand(synth)) return cmd_synth(cfg);
        if (app.got_subcommand(build)) return cmd_build(cfg);
        if (app.got_subcommand(split))
            return cmd_split(cfg, records_path.empty() ? cfg.out_dir + "/records.jsonl"
                                                       : records_path);
        if (app.got_subcommand(exp))
            return cmd_export(cfg, records_path.empty() ? cfg.out_dir + "/train.jsonl"
                                                        : records_path,
                              export_path);
        if (app.got_subcommand(eval))
            return cmd_eval(cfg, records_path.empty() ? cfg.out_dir + "/test.jsonl" : records_path,
                            echo_fixture_out);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const SchemaError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const GatewayError& e) {
        std::cerr << e.what() << "\n";
        return kExitGateway;
    } catch (const AllRecordsFailed& e) {
        std::cerr << e.what() << "\n";
        return kExitGateway;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}
