// Minimal end-to-end example: evolve a small dense classifier for the
// two-rings toy problem and print the winning architecture.

#include <iostream>

#include <gramevo/gramevo.hpp>

int main() {
  using namespace gramevo;

  // Search space: one to three fully-connected layers, then a fixed softmax.
  Grammar grammar = parse_grammar(R"(
<classification> ::= <fully-connected>
<fully-connected> ::= layer:fc <activation> [num-units,int,1,2,24] <bias>
<activation> ::= act:linear | act:relu | act:sigmoid
<bias> ::= bias:True | bias:False
<softmax> ::= layer:fc act:softmax num-units:2 bias:True
)");
  GaStructure structure = parse_structure(R"(
classification 1 3
softmax 1 1
)");

  // 600 noisy points on two concentric rings, split 70/15/15.
  DatasetSplit data = make_toy_dataset(ToyKind::Rings, 600, 0.25, /*seed=*/7);

  EvaluationBudget budget;
  budget.epochs = 10;
  budget.batch_size = 30;
  budget.learning_rate = 0.05;
  DenseTrainerEvaluator evaluator(data, budget);

  EvolutionConfig config;
  config.population_size = 8;
  config.generations = 6;
  config.master_seed = 11;

  RunHooks hooks;
  hooks.after_generation = [](const EngineState&, const GenerationStats& st) {
    std::cout << "generation " << st.generation << ": best validation accuracy "
              << format_double(st.best_fitness) << "\n";
    return true;
  };

  EngineState state = evolve(config, grammar, structure, evaluator, hooks);

  const Individual& best = *state.best;
  NetworkDescriptor nd = decode_individual(grammar, best);
  std::cout << "\nbest architecture (individual " << best.id << "):\n" << render(nd);

  TrainOutcome outcome = evaluator.train(nd, derive_seed(config.master_seed, "eval", best.id));
  std::cout << "\ntest accuracy: " << format_double(test_accuracy(outcome.model, data)) << "\n";
  return 0;
}
