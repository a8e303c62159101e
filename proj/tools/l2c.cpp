#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <memory>

#include "l2c/eval.hpp"
#include "l2c/generate.hpp"

using namespace l2c;

namespace {

struct Common {
    std::uint64_t seed = 0;
};

GraphicalModel load_model(const std::string& path) {
    return parse_uai(read_file(path), std::filesystem::path(path).stem().string());
}

Assignment load_evidence(const std::string& path, int num_vars) {
    if (path.empty()) return Assignment(num_vars);
    return parse_evidence(read_file(path), num_vars);
}

OrderHeuristic parse_order(const std::string& s) {
    if (s == "min-fill") return OrderHeuristic::MinFill;
    if (s == "min-degree") return OrderHeuristic::MinDegree;
    throw ValidationError("unknown order '" + s + "'");
}

std::shared_ptr<const ScorerNetwork> load_net(const std::string& path, int num_vars) {
    if (path.empty()) throw MissingArtifactError("this scorer needs --checkpoint");
    return std::make_shared<ScorerNetwork>(load_checkpoint(path, num_vars));
}

void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
    } else {
        write_file(out_path, text);
    }
}

ScorerFactory scorer_factory(const std::string& name, const std::string& checkpoint, int num_vars, int i_bound,
                             std::uint64_t seed) {
    if (name == "l2c-opt" || name == "l2c-rank") {
        auto net = load_net(checkpoint, num_vars);
        const bool opt = name == "l2c-opt";
        return [net, opt](const GraphicalModel&, const Assignment&) { return opt ? l2c_opt_scorer(net) : l2c_rank_scorer(net); };
    }
    if (name == "strong") return [i_bound](const GraphicalModel&, const Assignment&) { return strong_branching_scorer(i_bound); };
    if (name == "max-degree") {
        return [seed](const GraphicalModel&, const Assignment&) { return max_degree_scorer({50, 1, seed}); };
    }
    if (name == "oracle") return [](const GraphicalModel& m, const Assignment& ev) { return oracle_scorer(m, ev); };
    throw ValidationError("unknown scorer '" + name + "'");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learning-to-condition toolkit for MPE inference on binary graphical models"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Key-value config file (INI sections per subcommand)");
    Common common;
    app.add_option("--seed", common.seed, "Global seed")->capture_default_str();

    // parse
    auto* parse = app.add_subcommand("parse", "Validate a UAI model and report its structure");
    std::string p_model, p_evidence, p_out, p_order = "min-fill";
    int p_ibound = 10;
    parse->add_option("--model", p_model)->required();
    parse->add_option("--evidence", p_evidence);
    parse->add_option("--i-bound", p_ibound)->capture_default_str();
    parse->add_option("--order", p_order)->check(CLI::IsMember({"min-fill", "min-degree"}))->capture_default_str();
    parse->add_option("--out", p_out, "Write the normalized UAI text here");

    // generate
    auto* gen = app.add_subcommand("generate", "Write a seeded random binary model in UAI format");
    RandomModelSpec g_spec;
    std::string g_out;
    gen->add_option("--vars", g_spec.num_vars)->capture_default_str();
    gen->add_option("--unary-scale", g_spec.unary_scale)->capture_default_str();
    gen->add_option("--pairwise-scale", g_spec.pairwise_scale)->capture_default_str();
    gen->add_option("--extra-edge-ratio", g_spec.extra_edge_ratio)->capture_default_str();
    gen->add_option("--ternary-ratio", g_spec.ternary_ratio)->capture_default_str();
    gen->add_option("--zero-prob", g_spec.zero_prob)->capture_default_str();
    gen->add_option("--out", g_out);

    // sample
    auto* sample = app.add_subcommand("sample", "Draw Gibbs samples");
    std::string s_model, s_evidence, s_out;
    int s_n = 100;
    GibbsConfig s_gibbs;
    sample->add_option("--model", s_model)->required();
    sample->add_option("--evidence", s_evidence);
    sample->add_option("-n,--num-samples", s_n)->capture_default_str();
    sample->add_option("--burn-in", s_gibbs.burn_in)->capture_default_str();
    sample->add_option("--thinning", s_gibbs.thinning)->capture_default_str();
    sample->add_option("--out", s_out);

    // solve
    auto* solve = app.add_subcommand("solve", "Branch-and-bound MPE solve");
    std::string v_model, v_evidence, v_branch = "strong", v_node = "dfs", v_ckpt, v_order = "min-fill";
    double v_budget_ms = 0.0;
    int v_ibound = 10, v_strong_cands = 8;
    solve->add_option("--model", v_model)->required();
    solve->add_option("--evidence", v_evidence);
    solve->add_option("--budget-ms", v_budget_ms, "0 = unlimited")->capture_default_str();
    solve->add_option("--i-bound", v_ibound)->capture_default_str();
    solve->add_option("--order", v_order)->check(CLI::IsMember({"min-fill", "min-degree"}))->capture_default_str();
    solve->add_option("--branch", v_branch)->check(CLI::IsMember({"strong", "max-degree", "nn-opt", "nn-rank"}))->capture_default_str();
    solve->add_option("--node-sel", v_node)->check(CLI::IsMember({"dfs", "nn"}))->capture_default_str();
    solve->add_option("--strong-candidates", v_strong_cands, "0 = all free variables")->capture_default_str();
    solve->add_option("--checkpoint", v_ckpt);

    // collect
    auto* coll = app.add_subcommand("collect", "Collect a supervised dataset from solver traces");
    CollectionConfig c_cfg;
    std::string c_model, c_out;
    double c_budget_ms = 1000.0;
    coll->add_option("--model", c_model)->required();
    coll->add_option("--out", c_out)->required();
    coll->add_option("--query-ratio", c_cfg.query_ratio)->capture_default_str();
    coll->add_option("--c-max", c_cfg.c_max)->capture_default_str();
    coll->add_option("--budget-ms", c_budget_ms)->capture_default_str();
    coll->add_option("--num-samples", c_cfg.num_samples)->capture_default_str();
    coll->add_option("--w-time", c_cfg.stat_weights[0])->capture_default_str();
    coll->add_option("--w-nodes", c_cfg.stat_weights[1])->capture_default_str();
    coll->add_option("--w-obj", c_cfg.stat_weights[2])->capture_default_str();
    coll->add_option("--temperature", c_cfg.temperature)->capture_default_str();
    coll->add_option("--i-bound", c_cfg.i_bound)->capture_default_str();
    coll->add_option("--burn-in", c_cfg.gibbs.burn_in)->capture_default_str();
    coll->add_option("--thinning", c_cfg.gibbs.thinning)->capture_default_str();
    coll->add_option("--threads", c_cfg.threads)->capture_default_str();

    // train
    auto* trn = app.add_subcommand("train", "Train the scorer network");
    TrainConfig t_cfg;
    ScorerHyper t_hyper;
    std::string t_data, t_out, t_init;
    bool t_no_dropout = false;
    trn->add_option("--data", t_data)->required();
    trn->add_option("--out", t_out)->required();
    trn->add_option("--init", t_init, "Resume from a checkpoint");
    trn->add_option("--lr", t_cfg.lr)->capture_default_str();
    trn->add_option("--lr-decay", t_cfg.lr_decay)->capture_default_str();
    trn->add_option("--batch-size", t_cfg.batch_size)->capture_default_str();
    trn->add_option("--epochs", t_cfg.max_epochs)->capture_default_str();
    trn->add_option("--patience", t_cfg.patience)->capture_default_str();
    trn->add_option("--lambda-opt", t_cfg.lambda_opt)->capture_default_str();
    trn->add_flag("--no-dropout", t_no_dropout);
    trn->add_option("--d", t_hyper.d)->capture_default_str();
    trn->add_option("--heads", t_hyper.heads)->capture_default_str();
    trn->add_option("--attn-layers", t_hyper.attn_layers)->capture_default_str();
    trn->add_option("--blocks", t_hyper.blocks)->capture_default_str();
    trn->add_option("--hidden", t_hyper.hidden)->capture_default_str();
    trn->add_option("--dropout", t_hyper.dropout)->capture_default_str();

    // condition
    auto* cond = app.add_subcommand("condition", "Condition with a scorer, then solve the residual problem");
    ConditioningConfig k_cfg;
    std::string k_model, k_evidence, k_strategy = "greedy", k_scorer = "l2c-rank", k_ckpt;
    double k_final_ms = 0.0;
    int k_ibound = 10;
    cond->add_option("--model", k_model)->required();
    cond->add_option("--evidence", k_evidence);
    cond->add_option("--strategy", k_strategy)->check(CLI::IsMember({"greedy", "beam"}))->capture_default_str();
    cond->add_option("--scorer", k_scorer)
        ->check(CLI::IsMember({"l2c-opt", "l2c-rank", "strong", "max-degree", "oracle"}))
        ->capture_default_str();
    cond->add_option("--checkpoint", k_ckpt);
    cond->add_option("--tau", k_cfg.tau)->capture_default_str();
    cond->add_option("--dmax", k_cfg.d_max)->capture_default_str();
    cond->add_option("--beam-width", k_cfg.beam_width)->capture_default_str();
    cond->add_option("--beta", k_cfg.beta)->capture_default_str();
    cond->add_option("--final-budget-ms", k_final_ms, "0 = unlimited")->capture_default_str();
    cond->add_option("--i-bound", k_ibound)->capture_default_str();

    // eval
    auto* ev = app.add_subcommand("eval", "Run the experiment grid over a dataset's test split");
    ExperimentGrid e_grid;
    std::vector<double> e_budgets_ms{100, 300, 1000};
    std::string e_model, e_data, e_ckpt, e_csv, e_json, e_strategy = "greedy";
    double e_timeout = 30.0;
    ev->add_option("--model", e_model)->required();
    ev->add_option("--data", e_data)->required();
    ev->add_option("--checkpoint", e_ckpt);
    ev->add_option("--depths", e_grid.depths, "Fractions of the query variables")->capture_default_str();
    ev->add_option("--budgets-ms", e_budgets_ms)->capture_default_str();
    ev->add_option("--scorers", e_grid.strategies)->capture_default_str();
    ev->add_option("--strategy", e_strategy)->check(CLI::IsMember({"greedy", "beam"}))->capture_default_str();
    ev->add_option("--tau", e_grid.conditioning.tau)->capture_default_str();
    ev->add_option("--beam-width", e_grid.conditioning.beam_width)->capture_default_str();
    ev->add_option("--beta", e_grid.conditioning.beta)->capture_default_str();
    ev->add_option("--i-bound", e_grid.i_bound)->capture_default_str();
    ev->add_option("--decision-timeout", e_timeout)->capture_default_str();
    ev->add_option("--csv", e_csv, "CSV table path (default stdout)");
    ev->add_option("--json", e_json, "JSON table path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*parse) {
            const auto m = load_model(p_model);
            const auto e = load_evidence(p_evidence, m.num_vars);
            const auto order = make_order(m, e, parse_order(p_order));
            const auto mb = mini_bucket_bound(m, e, p_ibound, order);
            json j;
            j["name"] = m.name;
            j["num_vars"] = m.num_vars;
            j["num_factors"] = m.factors.size();
            j["evidence"] = encode_pairs(e);
            j["induced_width"] = order.induced_width;
            j["elimination_order"] = order.order;
            j["upper_bound"] = encode_real(mb.upper_bound);
            if (!p_out.empty()) write_file(p_out, serialize_uai(m));
            std::cout << j.dump() << "\n";
        } else if (*gen) {
            emit(g_out, serialize_uai(random_model(g_spec, common.seed)));
        } else if (*sample) {
            const auto m = load_model(s_model);
            const auto e = load_evidence(s_evidence, m.num_vars);
            s_gibbs.seed = common.seed;
            std::string out;
            for (const auto& a : gibbs_sample(m, s_n, s_gibbs, e)) {
                for (int i = 0; i < a.num_vars(); ++i) {
                    if (i) out += ' ';
                    out += static_cast<char>('0' + a[i]);
                }
                out += '\n';
            }
            emit(s_out, out);
        } else if (*solve) {
            const auto m = load_model(v_model);
            const auto e = load_evidence(v_evidence, m.num_vars);
            SolverOptions o;
            o.i_bound = v_ibound;
            o.order = parse_order(v_order);
            o.budget_s = v_budget_ms > 0 ? v_budget_ms / 1000.0 : kPosInf;
            std::shared_ptr<const ScorerNetwork> net;
            if (v_branch.rfind("nn", 0) == 0 || v_node == "nn") net = load_net(v_ckpt, m.num_vars);
            BranchPolicy b = v_branch == "strong"       ? strong_branching_policy(v_ibound, v_strong_cands)
                             : v_branch == "max-degree" ? max_degree_branch_policy({50, 1, common.seed})
                                                        : nn_branch_policy(net, 0.5, v_branch == "nn-opt");
            NodePolicy n = v_node == "nn" ? nn_node_policy(net) : dfs_node_policy();
            std::cout << to_json(solve_mpe(m, e, b, n, o)).dump() << "\n";
        } else if (*coll) {
            const auto m = load_model(c_model);
            c_cfg.seed = common.seed;
            c_cfg.budget_s = c_budget_ms / 1000.0;
            const auto ds = collect(m, c_cfg);
            save_dataset(ds, c_out);
            std::cout << json{{"records", ds.records.size()}, {"out", c_out}}.dump() << "\n";
        } else if (*trn) {
            const auto ds = load_dataset(t_data);
            t_cfg.seed = common.seed;
            t_cfg.dropout_enabled = !t_no_dropout;
            ScorerNetwork net = [&] {
                if (!t_init.empty()) return load_checkpoint(t_init, ds.num_vars);
                t_hyper.num_vars = ds.num_vars;
                return init_network(t_hyper, common.seed);
            }();
            const auto res = train(ds, std::move(net), t_cfg, [](const EpochStats& s) {
                std::cout << json{{"epoch", s.epoch}, {"lr", s.lr}, {"train_loss", encode_real(s.train_loss)},
                                  {"val_loss", encode_real(s.val_loss)}}
                                 .dump()
                          << std::endl;
            });
            save_checkpoint(res.net, t_out);
            std::cout << json{{"best_epoch", res.best_epoch}, {"best_val_loss", encode_real(res.best_val_loss)},
                              {"out", t_out}}
                             .dump()
                      << "\n";
        } else if (*cond) {
            const auto m = load_model(k_model);
            const auto e = load_evidence(k_evidence, m.num_vars);
            k_cfg.strategy = parse_strategy(k_strategy);
            k_cfg.final_budget_s = k_final_ms > 0 ? k_final_ms / 1000.0 : kPosInf;
            const auto f = scorer_factory(k_scorer, k_ckpt, m.num_vars, k_ibound, common.seed)(m, e);
            const auto r = solve_with_conditioning(m, f, e, k_cfg, k_ibound);
            json decisions = json::array();
            for (const auto& d : r.conditioning.decisions) decisions.push_back({d.var, d.value});
            json j{{"evidence", encode_pairs(r.conditioning.evidence)},
                   {"decisions", decisions},
                   {"assignment", r.solution ? encode_full_assignment(*r.solution) : json(nullptr)},
                   {"log_score", encode_real(r.log_score)},
                   {"beam_score", encode_real(r.conditioning.score)},
                   {"decision_times_s", r.conditioning.decision_times},
                   {"record", to_json(r.record)}};
            std::cout << j.dump() << "\n";
        } else if (*ev) {
            const auto m = load_model(e_model);
            const auto ds = load_dataset(e_data);
            e_grid.budgets_s.clear();
            for (double b : e_budgets_ms) e_grid.budgets_s.push_back(b / 1000.0);
            e_grid.conditioning.strategy = parse_strategy(e_strategy);
            std::map<std::string, ScorerFactory> scorers;
            for (const auto& s : e_grid.strategies) {
                scorers[s] = scorer_factory(s, e_ckpt, m.num_vars, e_grid.i_bound, common.seed);
            }
            const auto res = run_grid(m, ds, e_grid, scorers, e_timeout);
            emit(e_csv, grid_csv(res));
            if (!e_json.empty()) write_file(e_json, grid_json(res).dump(2) + "\n");
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const MissingArtifactError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
