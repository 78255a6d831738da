// choicefit: command-line front end.
//
//   choicefit <command> [--config run.json] [flags]
//
// Flags override the config file. Exit codes: 0 ok, 2 configuration or
// validation error, 3 estimation failure, 1 anything else.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "choicefit/app.hpp"

namespace {

struct Flags {
  std::string config, data, schema, out, procedure, fixtures;
  std::optional<double> level;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<double> ll_pooled, ll_sum;
  std::optional<std::size_t> M, K;
};

choicefit::app::RunConfig resolve(const Flags& f) {
  using namespace choicefit::app;
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (!f.data.empty()) c.data = f.data;
  if (!f.schema.empty()) c.schema = f.schema;
  if (!f.out.empty()) c.out = f.out;
  if (!f.procedure.empty()) c.procedure = f.procedure;
  if (!f.fixtures.empty()) c.fixtures = f.fixtures;
  if (f.level) c.level = *f.level;
  if (f.seed) {
    c.seed = *f.seed;
    if (c.generator) c.generator->seed = *f.seed;
  }
  if (f.jobs) c.jobs = *f.jobs;
  if (f.ll_pooled || f.ll_sum || f.M || f.K) {
    LRInput l = c.lrtest.value_or(LRInput{});
    if (f.ll_pooled) l.ll_pooled = *f.ll_pooled;
    if (f.ll_sum) l.ll_sum = *f.ll_sum;
    if (f.M) l.M = *f.M;
    if (f.K) l.K = *f.K;
    c.lrtest = l;
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace choicefit;
  CLI::App cli{"discrete-choice logit estimation, stepwise selection and structural tests"};
  cli.require_subcommand(1);
  Flags f;
  cli.add_option("--config", f.config, "run configuration (JSON)");
  cli.add_option("--data", f.data, "delimited data file");
  cli.add_option("--schema", f.schema, "schema document (JSON)");
  cli.add_option("--out", f.out, "output directory for JSON and trace files");
  cli.add_option("--procedure", f.procedure, "selection procedure")->check(CLI::IsMember({"A", "B", "auto"}));
  cli.add_option("--level", f.level, "significance level");
  cli.add_option("--seed", f.seed, "random seed");
  cli.add_option("--jobs", f.jobs, "worker threads (default: all cores)");
  cli.add_option("--fixtures", f.fixtures, "published LL values to replay (JSON)");

  const std::pair<const char*, const char*> commands[] = {
      {"describe", "outcome shares overall and per bin"},
      {"fit", "estimate one model"},
      {"select", "stepwise selection (procedure A, B or auto)"},
      {"probe", "test-add focal variables to the AIC-optimal model"},
      {"elasticity", "averaged elasticities of focal variables"},
      {"lrtest", "likelihood-ratio test from LL values or a fixtures file"},
      {"grid", "selection, probes and elasticities for every partition"},
      {"tests", "pooling and bin-structure tests per partition"},
      {"simulate", "draw a synthetic dataset from a generator spec"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = cli.add_subcommand(name, help);
    sub->fallthrough();
    if (std::string(name) == "lrtest") {
      sub->add_option("--ll-pooled", f.ll_pooled, "pooled log-likelihood");
      sub->add_option("--ll-sum", f.ll_sum, "sum of subset log-likelihoods");
      sub->add_option("-M", f.M, "number of subsets");
      sub->add_option("-K", f.K, "parameters per model");
    }
  }

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string cmd = cli.get_subcommands().front()->get_name();

  try {
    const auto c = resolve(f);
    app::Output o;
    if (cmd == "describe") o = app::cmd_describe(c);
    else if (cmd == "fit") o = app::cmd_fit(c);
    else if (cmd == "select") o = app::cmd_select(c);
    else if (cmd == "probe") o = app::cmd_probe(c);
    else if (cmd == "elasticity") o = app::cmd_elasticity(c);
    else if (cmd == "lrtest") o = app::cmd_lrtest(c);
    else if (cmd == "grid") o = app::cmd_grid(c);
    else if (cmd == "tests") o = app::cmd_tests(c);
    else if (cmd == "simulate") o = app::cmd_simulate(c);
    std::cout << o.text;
    app::write_output(o, c.out, cmd);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "choicefit: configuration error: " << e.what() << '\n';
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "choicefit: schema error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "choicefit: data error: " << e.what() << '\n';
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "choicefit: specification error: " << e.what() << '\n';
    return 2;
  } catch (const NestingError& e) {
    std::cerr << "choicefit: inconsistent inputs: " << e.what() << '\n';
    return 2;
  } catch (const EstimationError& e) {
    std::cerr << "choicefit: estimation failed: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "choicefit: " << e.what() << '\n';
    return 1;
  }
}
