// Command-line front end: verify / curate / grade / split / synth / rollout /
// train / eval. Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric
// failure.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "tinyrl/answer.hpp"
#include "tinyrl/checkpoint.hpp"
#include "tinyrl/corpus.hpp"
#include "tinyrl/pipeline.hpp"
#include "tinyrl/rollout.hpp"
#include "tinyrl/task.hpp"
#include "tinyrl/trainer.hpp"
#include "tinyrl/vocab.hpp"

namespace {

using nlohmann::json;

tinyrl::Vocab load_vocab(const std::string& path) {
    if (path.empty()) return tinyrl::Vocab::arithmetic();
    std::ifstream is(path);
    if (!is) throw tinyrl::DataError("cannot open vocab file " + path);
    return tinyrl::Vocab::from_json(json::parse(is));
}

json outcome_json(const tinyrl::VerifyOutcome& v) {
    return {{"status", tinyrl::to_string(v.status)}, {"reward", v.reward}};
}

int cmd_verify(const std::string& pred, const std::string& truth, const std::string& file) {
    if (!file.empty()) {
        std::ifstream is(file);
        if (!is) throw tinyrl::DataError("cannot open " + file);
        std::string line;
        int total = 0, correct = 0;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            auto v = tinyrl::reward(j.at("pred").get<std::string>(),
                                    j.at("truth").get<std::string>());
            std::cout << outcome_json(v).dump() << '\n';
            ++total;
            if (v.reward == 1) ++correct;
        }
        std::cout << json{{"total", total}, {"correct", correct}}.dump() << '\n';
        return 0;
    }
    std::cout << outcome_json(tinyrl::reward(pred, truth)).dump() << '\n';
    return 0;
}

std::vector<tinyrl::StageSpec> load_stage_specs(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw tinyrl::DataError("cannot open stages file " + path);
    std::vector<tinyrl::StageSpec> specs;
    for (const auto& sj : json::parse(is)) {
        tinyrl::StageSpec s;
        s.name = sj.at("name").get<std::string>();
        s.count = sj.at("count").get<int>();
        for (const auto& [lvl, f] : sj.at("levels").items())
            s.level_fractions[std::stoi(lvl)] = f.get<double>();
        specs.push_back(std::move(s));
    }
    return specs;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale group-relative RL trainer with verifiable math rewards"};
    app.require_subcommand(1);

    // verify
    auto* verify = app.add_subcommand("verify", "Score a prediction against a ground truth");
    std::string v_pred, v_truth, v_file;
    verify->add_option("--pred", v_pred, "Predicted answer text");
    verify->add_option("--truth", v_truth, "Ground-truth answer text");
    verify->add_option("--file", v_file, "JSONL batch of {pred, truth} lines");

    // curate
    auto* curate = app.add_subcommand("curate", "Dedup + noise + verification filters");
    std::string c_in, c_out, c_stats;
    curate->add_option("--in", c_in)->required();
    curate->add_option("--out", c_out)->required();
    curate->add_option("--stats", c_stats, "Write PipelineStats JSON here");

    // grade
    auto* grade = app.add_subcommand("grade", "Difficulty-grade a corpus by rollout accuracy");
    std::string g_in, g_out, g_grader, g_vocab;
    int g_rollouts = 8;
    std::uint64_t g_seed = 1;
    grade->add_option("--in", g_in)->required();
    grade->add_option("--out", g_out)->required();
    grade->add_option("--grader", g_grader, "Grader policy checkpoint")->required();
    grade->add_option("--rollouts", g_rollouts);
    grade->add_option("--seed", g_seed);
    grade->add_option("--vocab", g_vocab, "Vocab JSON (default: arithmetic)");

    // split
    auto* split = app.add_subcommand("split", "Emit per-stage curriculum corpora");
    std::string s_in, s_stages, s_outdir;
    std::uint64_t s_seed = 1;
    split->add_option("--in", s_in)->required();
    split->add_option("--stages", s_stages, "Stage spec JSON file")->required();
    split->add_option("--out-dir", s_outdir)->required();
    split->add_option("--seed", s_seed);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic arithmetic corpus");
    std::string sy_family = "add-1digit", sy_out;
    int sy_n = 100;
    std::uint64_t sy_seed = 1;
    synth->add_option("--family", sy_family, "add-1digit|add-2digit|sub|mul-1digit|mixed");
    synth->add_option("--n", sy_n);
    synth->add_option("--seed", sy_seed);
    synth->add_option("--out", sy_out)->required();

    // rollout
    auto* rollout = app.add_subcommand("rollout", "Dump a sampled batch as JSONL");
    std::string r_ckpt, r_data, r_vocab;
    int r_groups = 4, r_group_size = 8, r_maxlen = 64;
    std::uint64_t r_seed = 1;
    rollout->add_option("--checkpoint", r_ckpt)->required();
    rollout->add_option("--data", r_data)->required();
    rollout->add_option("--groups", r_groups);
    rollout->add_option("--group-size", r_group_size);
    rollout->add_option("--max-len", r_maxlen);
    rollout->add_option("--seed", r_seed);
    rollout->add_option("--vocab", r_vocab);

    // train
    auto* train = app.add_subcommand("train", "Run the RL training loop");
    std::string t_config, t_datadir, t_out, t_vocab;
    train->add_option("--config", t_config)->required();
    train->add_option("--data-dir", t_datadir)->required();
    train->add_option("--out", t_out)->required();
    train->add_option("--vocab", t_vocab);

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
    std::string e_ckpt, e_data, e_vocab;
    bool e_greedy = false;
    int e_sample = 0, e_maxlen = 64;
    double e_temp = 1.0;
    std::uint64_t e_seed = 1;
    eval->add_option("--checkpoint", e_ckpt)->required();
    eval->add_option("--data", e_data)->required();
    eval->add_flag("--greedy", e_greedy);
    eval->add_option("--sample", e_sample, "Sampled decode with k samples per item");
    eval->add_option("--temperature", e_temp);
    eval->add_option("--max-len", e_maxlen);
    eval->add_option("--seed", e_seed);
    eval->add_option("--vocab", e_vocab);

    CLI11_PARSE(app, argc, argv);

    try {
        if (verify->parsed()) return cmd_verify(v_pred, v_truth, v_file);

        if (curate->parsed()) {
            auto [items, stats] = tinyrl::curate(tinyrl::read_jsonl(c_in));
            tinyrl::write_jsonl(items, c_out);
            if (!c_stats.empty()) std::ofstream(c_stats) << stats.to_json().dump(2) << '\n';
            std::cerr << "kept " << items.size() << " of " << stats.input_count << '\n';
            return 0;
        }

        if (grade->parsed()) {
            auto vocab = load_vocab(g_vocab);
            auto params = tinyrl::load_checkpoint(g_grader);
            tinyrl::SamplingConfig cfg;
            auto graded = tinyrl::grade_difficulty(tinyrl::read_jsonl(g_in), params, vocab,
                                                   g_rollouts, cfg, g_seed);
            tinyrl::write_jsonl(graded, g_out);
            return 0;
        }

        if (split->parsed()) {
            auto specs = load_stage_specs(s_stages);
            auto items = tinyrl::read_jsonl(s_in);
            auto stages = tinyrl::stage_split(items, specs, s_seed);
            std::filesystem::create_directories(s_outdir);
            for (std::size_t i = 0; i < stages.size(); ++i)
                tinyrl::write_jsonl(stages[i], s_outdir + "/" + specs[i].name + ".jsonl");
            return 0;
        }

        if (synth->parsed()) {
            auto items = tinyrl::synth_corpus(tinyrl::task_family_from_string(sy_family), sy_n,
                                              sy_seed);
            tinyrl::write_jsonl(items, sy_out);
            return 0;
        }

        if (rollout->parsed()) {
            auto vocab = load_vocab(r_vocab);
            auto params = tinyrl::load_checkpoint(r_ckpt);
            auto items = tinyrl::read_jsonl(r_data);
            tinyrl::SamplingConfig cfg;
            cfg.group_size = r_group_size;
            cfg.max_response_len = r_maxlen;
            cfg.overlong_buffer = r_maxlen / 4;
            auto [groups, report] = tinyrl::fill_batch(params, vocab, items, r_groups, cfg, r_seed);
            for (const auto& g : groups) {
                for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
                    const auto& r = g.rollouts[i];
                    json j{{"query_id", r.query_id},
                           {"tokens", r.token_ids},
                           {"decoded_text", vocab.decode(r.token_ids)},
                           {"reward", r.reward},
                           {"truncated", r.truncated},
                           {"advantage", g.advantages[i]}};
                    std::cout << j.dump() << '\n';
                }
            }
            return 0;
        }

        if (train->parsed()) {
            std::ifstream is(t_config);
            if (!is) throw tinyrl::ConfigError("cannot open config " + t_config);
            auto config = tinyrl::TrainConfig::from_json(json::parse(is));
            auto vocab = load_vocab(t_vocab);
            std::vector<std::vector<tinyrl::TaskItem>> corpora;
            for (const auto& s : config.stages)
                corpora.push_back(tinyrl::read_jsonl(t_datadir + "/" + s.corpus));
            tinyrl::train(config, corpora, t_out, vocab);
            return 0;
        }

        if (eval->parsed()) {
            auto vocab = load_vocab(e_vocab);
            auto params = tinyrl::load_checkpoint(e_ckpt);
            auto items = tinyrl::read_jsonl(e_data);
            tinyrl::DecodeMode mode;
            if (e_sample > 0) {
                mode.greedy = false;
                mode.k = e_sample;
                mode.temperature = e_temp;
                mode.seed = e_seed;
            }
            auto res = tinyrl::evaluate(params, vocab, items, mode, e_maxlen, e_data);
            std::cout << res.to_json().dump(2) << '\n';
            return 0;
        }
    } catch (const tinyrl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const tinyrl::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 4;
    } catch (const tinyrl::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
