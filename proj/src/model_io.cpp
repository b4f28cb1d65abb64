#include "dagdp/model_io.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace dagdp {

namespace {

constexpr int kFormatVersion = 1;

// --- s-expression scanning -------------------------------------------------

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    if (ch == '(' || ch == ')') {
      if (!current.empty()) {
        tokens.push_back(current);
        current.clear();
      }
      tokens.push_back(std::string(1, ch));
    } else if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!current.empty()) {
        tokens.push_back(current);
        current.clear();
      }
    } else {
      current += ch;
    }
  }
  if (!current.empty()) tokens.push_back(current);
  return tokens;
}

bool parse_number(const std::string& token, double& out) {
  const char* begin = token.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end != begin && *end == '\0';
}

struct TokenCursor {
  const std::vector<std::string>& tokens;
  std::size_t pos = 0;

  const std::string& peek() const {
    if (pos >= tokens.size()) throw InvalidSpec("unexpected end of expression");
    return tokens[pos];
  }
  std::string next() {
    if (pos >= tokens.size()) throw InvalidSpec("unexpected end of expression");
    return tokens[pos++];
  }
  bool done() const { return pos == tokens.size(); }
};

Expr parse_expr(TokenCursor& cur, const std::map<std::string, int>& vars) {
  std::string tok = cur.next();
  if (tok != "(") {
    double v;
    if (parse_number(tok, v)) return Expr::constant(v);
    auto it = vars.find(tok);
    if (it == vars.end()) throw InvalidSpec("unknown variable name: " + tok);
    return Expr::variable(it->second);
  }
  const std::string op = cur.next();
  Expr result;
  if (op == "neg" || op == "exp" || op == "ln") {
    Expr a = parse_expr(cur, vars);
    result = op == "neg" ? Expr::neg(a) : op == "exp" ? Expr::exp(a) : Expr::ln(a);
  } else if (op == "pow") {
    Expr a = parse_expr(cur, vars);
    double e;
    if (!parse_number(cur.next(), e)) throw InvalidSpec("pow exponent must be a number");
    result = Expr::pow(a, e);
  } else if (op == "add" || op == "sub" || op == "mul" || op == "div") {
    Expr a = parse_expr(cur, vars);
    Expr b = parse_expr(cur, vars);
    result = op == "add" ? a + b : op == "sub" ? a - b : op == "mul" ? a * b : a / b;
  } else {
    throw InvalidSpec("unknown expression operator: " + op);
  }
  if (cur.next() != ")") throw InvalidSpec("expected ')' in expression");
  return result;
}

Expr parse_expr_string(const std::string& text, const std::map<std::string, int>& vars) {
  auto tokens = tokenize(text);
  TokenCursor cur{tokens};
  Expr e = parse_expr(cur, vars);
  if (!cur.done()) throw InvalidSpec("trailing tokens after expression: " + text);
  return e;
}

Proposition parse_prop(TokenCursor& cur) {
  if (cur.next() != "(") throw InvalidSpec("proposition must start with '('");
  const std::string op = cur.next();
  if (op == "y") {
    double s, r;
    if (!parse_number(cur.next(), s) || !parse_number(cur.next(), r))
      throw InvalidSpec("atom needs numeric stage and disjunct");
    if (cur.next() != ")") throw InvalidSpec("expected ')' after atom");
    return Proposition::atom(static_cast<int>(s) - 1, static_cast<int>(r) - 1);
  }
  std::vector<Proposition> children;
  while (cur.peek() != ")") children.push_back(parse_prop(cur));
  cur.next();  // consume ')'
  if (op == "not") {
    if (children.size() != 1) throw InvalidSpec("not takes one argument");
    return Proposition::not_of(std::move(children[0]));
  }
  if (op == "implies" || op == "iff") {
    if (children.size() != 2) throw InvalidSpec(op + " takes two arguments");
    if (op == "implies")
      return Proposition::implies(std::move(children[0]), std::move(children[1]));
    return Proposition::iff(std::move(children[0]), std::move(children[1]));
  }
  if (op == "and") return Proposition::and_of(std::move(children));
  if (op == "or") return Proposition::or_of(std::move(children));
  if (op == "xor") return Proposition::xor_of(std::move(children));
  throw InvalidSpec("unknown proposition operator: " + op);
}

}  // namespace

Proposition parse_proposition(const std::string& text) {
  auto tokens = tokenize(text);
  TokenCursor cur{tokens};
  Proposition p = parse_prop(cur);
  if (!cur.done()) throw InvalidSpec("trailing tokens after proposition: " + text);
  return p;
}

std::string serialize_model(const DagdpModel& model) {
  std::ostringstream out;
  const auto names = model.local_names();
  out << "dagdp-model " << kFormatVersion << "\n";
  out << "stages " << model.stage_count() << "\n";
  out << "boundaries";
  for (double b : model.boundaries()) out << " " << format_double(b);
  out << "\n";
  for (const auto& s : model.states())
    out << "state " << s.name << " " << format_double(s.lower) << " " << format_double(s.upper)
        << " " << format_double(s.initial) << "\n";
  for (const auto& c : model.controls()) {
    out << "control " << c.name << " " << format_double(c.lower) << " " << format_double(c.upper);
    if (c.fixed_initial)
      out << " fixed " << format_double(*c.fixed_initial) << "\n";
    else
      out << " free\n";
  }
  for (const auto& a : model.algebraics())
    out << "algebraic " << a.name << " " << format_double(a.lower) << " "
        << format_double(a.upper) << "\n";
  for (const auto& p : model.parameters())
    out << "parameter " << p.name << " " << format_double(p.lower) << " "
        << format_double(p.upper) << "\n";
  if (!model.integrand().empty()) out << "integrand " << model.integrand().prefix(names) << "\n";
  for (const auto& g : model.global_constraints()) out << "global " << g.prefix(names) << "\n";
  for (int s = 0; s < model.stage_count(); ++s) {
    const auto& ds = model.disjuncts(s);
    for (std::size_t r = 0; r < ds.size(); ++r) {
      for (std::size_t m = 0; m < ds[r].state_rhs.size(); ++m)
        out << "rhs " << s + 1 << " " << r + 1 << " " << model.states()[m].name << " "
            << ds[r].state_rhs[m].prefix(names) << "\n";
      for (const auto& alg : ds[r].algebraic)
        out << "alg " << s + 1 << " " << r + 1 << " " << alg.prefix(names) << "\n";
    }
  }
  for (const auto& p : model.propositions()) out << "prop " << p.prefix() << "\n";
  out << "end\n";
  return out.str();
}

DagdpModel parse_model(const std::string& text) {
  std::istringstream in(text);
  std::string line;

  auto fail = [](const std::string& why, const std::string& line_text) -> void {
    throw InvalidSpec("model parse: " + why + " in line: " + line_text);
  };

  if (!std::getline(in, line)) throw InvalidSpec("empty model text");
  {
    std::istringstream header(line);
    std::string magic;
    int version = -1;
    header >> magic >> version;
    if (magic != "dagdp-model") throw InvalidSpec("missing dagdp-model header");
    if (version != kFormatVersion)
      throw InvalidSpec("unsupported model format version " + std::to_string(version));
  }

  int declared_stages = -1;
  std::vector<double> boundaries;
  std::vector<StateDecl> states;
  std::vector<ControlDecl> controls;
  std::vector<AlgebraicDecl> algebraics;
  std::vector<ParameterDecl> parameters;
  // Raw lines whose expressions need the full name table; parsed after the
  // declarations are complete.
  struct RhsLine {
    int stage, mode;
    std::string state, expr;
  };
  struct AlgLine {
    int stage, mode;
    std::string expr;
  };
  std::string integrand_text;
  std::vector<std::string> global_texts;
  std::vector<RhsLine> rhs_lines;
  std::vector<AlgLine> alg_lines;
  std::vector<std::string> prop_texts;
  bool saw_end = false;

  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "stages") {
      ls >> declared_stages;
    } else if (key == "boundaries") {
      double b;
      while (ls >> b) boundaries.push_back(b);
    } else if (key == "state") {
      StateDecl s;
      if (!(ls >> s.name >> s.lower >> s.upper >> s.initial)) fail("bad state", line);
      states.push_back(std::move(s));
    } else if (key == "control") {
      ControlDecl c;
      std::string mode;
      if (!(ls >> c.name >> c.lower >> c.upper >> mode)) fail("bad control", line);
      if (mode == "fixed") {
        double v;
        if (!(ls >> v)) fail("fixed control needs a value", line);
        c.fixed_initial = v;
      } else if (mode != "free") {
        fail("control must be 'fixed <v>' or 'free'", line);
      }
      controls.push_back(std::move(c));
    } else if (key == "algebraic") {
      AlgebraicDecl a;
      if (!(ls >> a.name >> a.lower >> a.upper)) fail("bad algebraic", line);
      algebraics.push_back(std::move(a));
    } else if (key == "parameter") {
      ParameterDecl p;
      if (!(ls >> p.name >> p.lower >> p.upper)) fail("bad parameter", line);
      parameters.push_back(std::move(p));
    } else if (key == "integrand") {
      std::getline(ls, integrand_text);
    } else if (key == "global") {
      std::string rest;
      std::getline(ls, rest);
      global_texts.push_back(rest);
    } else if (key == "rhs") {
      RhsLine r;
      if (!(ls >> r.stage >> r.mode >> r.state)) fail("bad rhs", line);
      std::getline(ls, r.expr);
      rhs_lines.push_back(std::move(r));
    } else if (key == "alg") {
      AlgLine a;
      if (!(ls >> a.stage >> a.mode)) fail("bad alg", line);
      std::getline(ls, a.expr);
      alg_lines.push_back(std::move(a));
    } else if (key == "prop") {
      std::string rest;
      std::getline(ls, rest);
      prop_texts.push_back(rest);
    } else if (key == "end") {
      saw_end = true;
      break;
    } else {
      fail("unknown key '" + key + "'", line);
    }
  }
  if (!saw_end) throw InvalidSpec("model text missing 'end' terminator");
  if (declared_stages != static_cast<int>(boundaries.size()) - 1)
    throw InvalidSpec("stage count does not match the boundary list");

  DagdpModel model(boundaries);
  std::map<std::string, int> vars;
  int index = 0;
  for (const auto& s : states) {
    vars[s.name] = index++;
    model.add_state(s);
  }
  for (const auto& c : controls) {
    vars[c.name] = index++;
    model.add_control(c);
  }
  for (const auto& a : algebraics) {
    vars[a.name] = index++;
    model.add_algebraic(a);
  }
  for (const auto& p : parameters) {
    vars[p.name] = index++;
    model.add_parameter(p);
  }
  vars["t"] = index;

  if (!integrand_text.empty()) model.set_integrand(parse_expr_string(integrand_text, vars));
  for (const auto& g : global_texts) model.add_global_constraint(parse_expr_string(g, vars));

  // Group RHS lines into disjuncts, honoring file order per stage.
  std::map<std::pair<int, int>, Disjunct> partial;
  std::vector<std::pair<int, int>> order;
  for (const auto& r : rhs_lines) {
    auto key = std::make_pair(r.stage, r.mode);
    if (!partial.count(key)) {
      partial[key].state_rhs.resize(states.size());
      order.push_back(key);
    }
    auto it = vars.find(r.state);
    if (it == vars.end() || it->second >= static_cast<int>(states.size()))
      throw InvalidSpec("rhs line references unknown state: " + r.state);
    partial[key].state_rhs[static_cast<std::size_t>(it->second)] =
        parse_expr_string(r.expr, vars);
  }
  for (const auto& a : alg_lines) {
    auto key = std::make_pair(a.stage, a.mode);
    if (!partial.count(key)) throw InvalidSpec("alg line without rhs lines for its disjunct");
    partial[key].algebraic.push_back(parse_expr_string(a.expr, vars));
  }
  for (const auto& key : order) {
    for (const Expr& e : partial[key].state_rhs)
      if (e.empty())
        throw InvalidSpec("disjunct missing an RHS for some state at stage " +
                          std::to_string(key.first));
    if (key.second != model.disjunct_count(key.first - 1) + 1)
      throw InvalidSpec("disjunct modes must appear in order within a stage");
    model.add_disjunct(key.first - 1, std::move(partial[key]));
  }

  for (const auto& p : prop_texts) model.add_proposition(parse_proposition(p));
  return model;
}

void save_model(const DagdpModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out << serialize_model(model);
}

DagdpModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

}  // namespace dagdp
