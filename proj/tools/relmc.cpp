// Command-line front end: lifted checking, ground enumeration, and
// lifted-vs-ground comparison over relational MDP models.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "relmc/checker.hpp"
#include "relmc/model_parser.hpp"
#include "relmc/oracle.hpp"

namespace {

using nlohmann::ordered_json;
using namespace relmc;

/// Log verbosity from the REBEL_LOG environment variable: quiet by default,
/// "info" for progress notes, "debug" for per-stage details.
int log_level() {
    static int level = [] {
        const char* env = std::getenv("REBEL_LOG");
        if (!env) return 0;
        std::string v(env);
        if (v == "debug") return 2;
        if (v == "info") return 1;
        return 0;
    }();
    return level;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "info: " << msg << "\n";
}

void log_debug(const std::string& msg) {
    if (log_level() >= 2) std::cerr << "debug: " << msg << "\n";
}

/// Options shared by every subcommand; mirrors one run's configuration.
struct Options {
    std::string model_path;
    std::string formula_text;
    std::string formula_path;
    std::int64_t state_bound = -1;  // negative: use the model's own
    double epsilon = 1e-6;
    std::size_t max_iterations = 1000;
    std::string constants_csv;
    std::string output = "json";
    unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
    std::size_t explosion_cap = 1'000'000;
    double threshold_slack = 0.0;
};

void add_common_options(CLI::App* cmd, Options& o) {
    cmd->add_option("--model", o.model_path, "Model file")->required();
    cmd->add_option("--formula", o.formula_text, "Formula text");
    cmd->add_option("--formula-file", o.formula_path,
                    "File containing the formula");
    cmd->add_option("--state-bound", o.state_bound,
                    "Maximum abstract state size (overrides the model's)");
    cmd->add_option("--epsilon", o.epsilon,
                    "Convergence tolerance for unbounded untils");
    cmd->add_option("--max-iterations", o.max_iterations,
                    "Iteration cap for unbounded untils");
    cmd->add_option("--constants", o.constants_csv,
                    "Comma-separated object constants for ground runs");
    cmd->add_option("--output", o.output, "Output format: json or text");
    cmd->add_option("--jobs", o.jobs, "Worker threads for regression");
    cmd->add_option("--explosion-cap", o.explosion_cap,
                    "Ground state count limit");
    cmd->add_option("--threshold-slack", o.threshold_slack,
                    "Symmetric slack applied to threshold comparisons");
}

RMDPModel load_model(const Options& o) {
    std::ifstream in(o.model_path);
    if (!in)
        throw ValidationError("cannot read model file '" + o.model_path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    RMDPModel m = parse_model(ss.str());
    log_debug("model '" + o.model_path + "': " +
              std::to_string(m.transitions.size()) + " transition rules");
    return m;
}

/// The formula from --formula or --formula-file; exactly one source.
/// Renaming warnings from the parser go to stderr.
StateFormulaPtr load_formula(const Options& o, bool required) {
    if (!o.formula_text.empty() && !o.formula_path.empty())
        throw ValidationError(
            "give the formula either inline or as a file, not both");
    std::string text = o.formula_text;
    if (!o.formula_path.empty()) {
        std::ifstream in(o.formula_path);
        if (!in)
            throw ValidationError("cannot read formula file '" +
                                  o.formula_path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    if (text.empty()) {
        if (required)
            throw ValidationError("a formula is required (--formula or "
                                  "--formula-file)");
        return nullptr;
    }
    std::vector<ScopeWarning> warnings;
    StateFormulaPtr f = parse_formula(text, &warnings);
    for (const ScopeWarning& w : warnings)
        std::cerr << "warning: " << w.message << "\n";
    return f;
}

std::vector<Term> parse_constants(const Options& o, bool required) {
    std::vector<Term> out;
    std::string csv = o.constants_csv;
    std::size_t start = 0;
    while (start <= csv.size() && !csv.empty()) {
        std::size_t comma = csv.find(',', start);
        std::string name = csv.substr(
            start, comma == std::string::npos ? std::string::npos
                                              : comma - start);
        std::size_t a = name.find_first_not_of(" \t");
        std::size_t b = name.find_last_not_of(" \t");
        if (a != std::string::npos) {
            Term t = Term::make(name.substr(a, b - a + 1));
            if (!t.is_constant())
                throw ValidationError("constant list entry '" + t.name() +
                                      "' is not a constant");
            out.push_back(t);
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (required && out.empty())
        throw ValidationError("this command needs --constants");
    return out;
}

void collect_formula_constants(const StateFormula& f, std::set<Term>& out) {
    switch (f.kind) {
    case StateFormula::Kind::Lit:
    case StateFormula::Kind::NegLit:
        for (Term t : f.atom.args)
            if (t.is_constant()) out.insert(t);
        return;
    case StateFormula::Kind::And:
    case StateFormula::Kind::Or:
        collect_formula_constants(*f.left, out);
        collect_formula_constants(*f.right, out);
        return;
    case StateFormula::Kind::Prob:
        if (f.path->kind == PathFormula::Kind::Next) {
            collect_formula_constants(*f.path->operand, out);
        } else {
            collect_formula_constants(*f.path->lhs, out);
            collect_formula_constants(*f.path->rhs, out);
        }
        return;
    default:
        return;
    }
}

void validate_output_format(const Options& o) {
    if (o.output != "json" && o.output != "text")
        throw ValidationError("unknown output format '" + o.output + "'");
}

CheckOptions check_options(const Options& o) {
    if (!(o.epsilon > 0.0))
        throw ValidationError("epsilon must be positive");
    CheckOptions opt;
    if (o.state_bound >= 0)
        opt.state_bound = static_cast<std::size_t>(o.state_bound);
    opt.epsilon = o.epsilon;
    opt.max_iterations = o.max_iterations;
    opt.jobs = std::max(1u, o.jobs);
    opt.threshold_slack = o.threshold_slack;
    return opt;
}

/// With an open-ended object domain the abstract bound must leave room for
/// every constant the formula pins down, or no satisfying state could even
/// mention them all.
void require_bound_fits_formula(const RMDPModel& m, const StateFormula& f,
                                const CheckOptions& opt) {
    if (m.constants) return;
    std::optional<std::size_t> bound =
        opt.state_bound ? opt.state_bound : m.state_bound;
    if (!bound) return;
    std::set<Term> consts;
    collect_formula_constants(f, consts);
    if (*bound < consts.size())
        throw ValidationError(
            "state bound " + std::to_string(*bound) + " is smaller than the " +
            std::to_string(consts.size()) +
            " distinct constants the formula mentions");
}

void emit(const std::string& s) { std::cout << s; }

ordered_json sat_json(const SatSet& sat) {
    ordered_json arr = ordered_json::array();
    for (const SatEntry& e : sat.entries) {
        ordered_json row;
        row["state"] = e.state.render();
        if (e.value) row["value"] = *e.value;
        if (e.negated) row["negated"] = true;
        arr.push_back(std::move(row));
    }
    return arr;
}

int cmd_check(const Options& o) {
    validate_output_format(o);
    RMDPModel model = load_model(o);
    StateFormulaPtr f = load_formula(o, true);
    CheckOptions opt = check_options(o);
    require_bound_fits_formula(model, *f, opt);

    CheckResult r = check(*f, model, opt);
    log_info("check finished after " + std::to_string(r.iterations) +
             " iterations of the outermost operator");

    if (o.output == "json") {
        ordered_json out;
        out["schema"] = 1;
        out["formula"] = render_formula(*f);
        out["iterations"] = r.iterations;
        out["converged"] = r.converged;
        out["sat"] = sat_json(r.sat);
        if (r.has_values) {
            ordered_json vals = ordered_json::array();
            for (const VRule& rule : r.values.rules) {
                ordered_json row;
                row["value"] = rule.value;
                row["state"] = rule.state.render();
                vals.push_back(std::move(row));
            }
            out["values"] = std::move(vals);
        }
        emit(out.dump(2) + "\n");
    } else {
        std::ostringstream out;
        out << "formula: " << render_formula(*f) << "\n";
        out << "iterations: " << r.iterations << "\n";
        out << "converged: " << (r.converged ? "true" : "false") << "\n";
        out << "sat:\n";
        std::vector<SatEntry> entries = r.sat.entries;
        std::stable_sort(entries.begin(), entries.end(),
                         [](const SatEntry& a, const SatEntry& b) {
                             return a.value.value_or(-1.0) >
                                    b.value.value_or(-1.0);
                         });
        for (const SatEntry& e : entries) {
            out << "  ";
            if (e.value) out << detail::render_number(*e.value) << " ";
            if (e.negated) out << "not ";
            out << (e.state.atoms().empty() ? "true" : e.state.render())
                << "\n";
        }
        if (r.has_values) {
            out << "values:\n";
            out << render_value_function(r.values);
        }
        emit(out.str());
    }
    return 0;
}

int cmd_ground(const Options& o) {
    validate_output_format(o);
    RMDPModel model = load_model(o);
    StateFormulaPtr f = load_formula(o, false);
    std::vector<Term> pool = parse_constants(o, true);
    if (!(o.epsilon > 0.0)) throw ValidationError("epsilon must be positive");

    GroundMDP mdp = enumerate(model, pool, {}, o.explosion_cap);
    std::size_t choices = 0;
    for (const auto& row : mdp.transitions) choices += row.size();
    log_info("enumerated " + std::to_string(mdp.states.size()) +
             " ground states");

    std::optional<ExplicitResult> result;
    if (f) result = explicit_check(mdp, *f, o.epsilon, o.max_iterations);

    if (o.output == "json") {
        ordered_json out;
        out["schema"] = 1;
        out["states"] = mdp.states.size();
        out["transitions"] = choices;
        if (result) {
            ordered_json vals = ordered_json::array();
            for (std::size_t i = 0; i < mdp.states.size(); ++i) {
                ordered_json row;
                row["state"] = mdp.states[i].render();
                row["value"] = result->value[i];
                vals.push_back(std::move(row));
            }
            out["values"] = std::move(vals);
        }
        emit(out.dump(2) + "\n");
    } else {
        std::ostringstream out;
        out << "states: " << mdp.states.size() << "\n";
        out << "transitions: " << choices << "\n";
        if (result) out << "\n" << values_csv(mdp, result->value);
        emit(out.str());
    }
    return 0;
}

int cmd_compare(const Options& o) {
    validate_output_format(o);
    RMDPModel model = load_model(o);
    StateFormulaPtr f = load_formula(o, true);
    std::vector<Term> pool = parse_constants(o, true);
    CheckOptions opt = check_options(o);
    require_bound_fits_formula(model, *f, opt);

    CheckResult lifted = check(*f, model, opt);
    GroundMDP mdp = enumerate(model, pool, {}, o.explosion_cap);
    CompareReport report =
        compare(mdp, *f, lifted.sat,
                lifted.has_values ? std::optional<ValueFunction>(lifted.values)
                                  : std::nullopt,
                o.epsilon, o.max_iterations);
    log_info("compared " + std::to_string(report.states) + " ground states, " +
             std::to_string(report.mismatches.size()) + " mismatches");

    if (o.output == "json") {
        ordered_json out;
        out["schema"] = 1;
        out["formula"] = render_formula(*f);
        out["states"] = report.states;
        out["mismatch_count"] = report.mismatches.size();
        ordered_json rows = ordered_json::array();
        for (const CompareMismatch& mm : report.mismatches) {
            ordered_json row;
            row["state"] = mdp.states[mm.state].render();
            row["lifted"] = mm.lifted;
            row["explicit"] = mm.explicit_holds;
            rows.push_back(std::move(row));
        }
        out["mismatches"] = std::move(rows);
        out["values_compared"] = report.values_compared;
        if (report.values_compared)
            out["max_value_deviation"] = report.max_value_deviation;
        emit(out.dump(2) + "\n");
    } else {
        std::ostringstream out;
        out << "states: " << report.states << "\n";
        out << "mismatches: " << report.mismatches.size() << "\n";
        for (const CompareMismatch& mm : report.mismatches)
            out << "  " << mdp.states[mm.state].render() << " lifted="
                << (mm.lifted ? "true" : "false") << " explicit="
                << (mm.explicit_holds ? "true" : "false") << "\n";
        if (report.values_compared)
            out << "max value deviation: "
                << detail::render_number(report.max_value_deviation) << "\n";
        emit(out.str());
    }
    return report.mismatches.empty() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lifted probabilistic model checking for relational MDPs"};
    app.require_subcommand(1);

    Options check_opts, ground_opts, compare_opts;
    CLI::App* check_cmd = app.add_subcommand(
        "check", "Evaluate a formula against the abstract model");
    add_common_options(check_cmd, check_opts);
    CLI::App* ground_cmd = app.add_subcommand(
        "ground", "Enumerate the explicit MDP over given constants");
    add_common_options(ground_cmd, ground_opts);
    CLI::App* compare_cmd = app.add_subcommand(
        "compare", "Cross-check the lifted result against the explicit MDP");
    add_common_options(compare_cmd, compare_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (check_cmd->parsed()) return cmd_check(check_opts);
        if (ground_cmd->parsed()) return cmd_ground(ground_opts);
        return cmd_compare(compare_opts);
    } catch (const NonConvergence& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const UnsupportedNegation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ExplosionGuard& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
