#include "prodspec/modelfile.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace prodspec {

namespace {

struct Token {
    enum Kind { Ident, Number, Punct, End } kind = End;
    std::string text;
    int line = 1, col = 1;
};

class Lexer {
public:
    explicit Lexer(const std::string& text) : s_(text) {}

    Token next() {
        skip_space();
        Token t;
        t.line = line_;
        t.col = col_;
        if (pos_ >= s_.size()) return t;
        char c = s_[pos_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            t.kind = Token::Ident;
            while (pos_ < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
                t.text += take();
            return t;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+') {
            t.kind = Token::Number;
            // maximal munch over number characters; strict shape checked later
            while (pos_ < s_.size()) {
                char d = s_[pos_];
                if (std::isdigit(static_cast<unsigned char>(d)) || d == '.' || d == 'e' ||
                    d == 'E' || d == '+' || d == '-' || d == 'i')
                    t.text += take();
                else
                    break;
            }
            return t;
        }
        if (c == '{' || c == '}' || c == '[' || c == ']' || c == ':' || c == ',') {
            t.kind = Token::Punct;
            t.text = take();
            return t;
        }
        fail_at(t.line, t.col, std::string("unexpected character '") + c + "'");
    }

    [[noreturn]] static void fail_at(int line, int col, const std::string& msg) {
        fail(Errc::parse_error,
             "line " + std::to_string(line) + ", col " + std::to_string(col) + ": " + msg);
    }

private:
    char take() {
        char c = s_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }
    void skip_space() {
        while (pos_ < s_.size()) {
            char c = s_[pos_];
            if (c == '#') {
                while (pos_ < s_.size() && s_[pos_] != '\n') take();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                take();
            } else {
                break;
            }
        }
    }

    const std::string& s_;
    std::size_t pos_ = 0;
    int line_ = 1, col_ = 1;
};

class Parser {
public:
    explicit Parser(const std::string& text) : lex_(text) { advance(); }

    ValidatedModel parse() {
        expect_ident("model");
        expect_punct("{");
        expect_ident("factors");
        expect_punct("[");
        std::vector<FactorDims> factors;
        while (!is_punct("]")) {
            factors.push_back(parse_factor());
        }
        expect_punct("]");
        expect_punct("}");
        if (cur_.kind != Token::End)
            Lexer::fail_at(cur_.line, cur_.col, "trailing content after model");
        if (factors.empty()) fail(Errc::empty_model, "model document lists no factors");
        return validate(make_chain(factors));
    }

private:
    FactorDims parse_factor() {
        Token head = cur_;
        std::string kind = expect_any_ident();
        expect_punct("{");
        FactorDims fd;
        if (kind == "cue_sum") {
            CueSumFactor cue;
            bool have_weights = false;
            while (!is_punct("}")) {
                std::string field = expect_any_ident();
                expect_punct(":");
                if (field == "weights") {
                    expect_punct("[");
                    while (!is_punct("]")) {
                        cue.weights.push_back(parse_complex());
                        if (is_punct(",")) advance();
                    }
                    expect_punct("]");
                    have_weights = true;
                } else {
                    Lexer::fail_at(cur_.line, cur_.col, "unknown cue_sum field '" + field + "'");
                }
                if (is_punct(",")) advance();
            }
            expect_punct("}");
            if (!have_weights)
                Lexer::fail_at(head.line, head.col, "cue_sum needs a weights list");
            fd.factor = cue;
        } else if (kind == "ginibre") {
            GinibreFactor gin;
            bool have_sigma = false, have_rows = false, have_cols = false;
            while (!is_punct("}")) {
                std::string field = expect_any_ident();
                expect_punct(":");
                if (field == "sigma") {
                    gin.sigma = parse_real();
                    have_sigma = true;
                } else if (field == "rows") {
                    fd.rows = parse_int();
                    have_rows = true;
                } else if (field == "cols") {
                    fd.cols = parse_int();
                    have_cols = true;
                } else {
                    Lexer::fail_at(cur_.line, cur_.col, "unknown ginibre field '" + field + "'");
                }
                if (is_punct(",")) advance();
            }
            expect_punct("}");
            if (!have_sigma || !have_rows || !have_cols)
                Lexer::fail_at(head.line, head.col, "ginibre needs sigma, rows, cols");
            fd.factor = gin;
        } else {
            Lexer::fail_at(head.line, head.col, "unknown factor kind '" + kind + "'");
        }
        return fd;
    }

    // complex literal: a | ai | a+bi | a-bi
    Cx parse_complex() {
        Token t = cur_;
        if (t.kind != Token::Number)
            Lexer::fail_at(t.line, t.col, "expected a number");
        advance();
        const std::string& s = t.text;
        const char* p = s.c_str();
        char* end = nullptr;
        double re = std::strtod(p, &end);
        if (end == p) Lexer::fail_at(t.line, t.col, "malformed number '" + s + "'");
        if (*end == '\0') return {re, 0.0};
        if (*end == 'i' && *(end + 1) == '\0') return {0.0, re}; // pure imaginary
        if (*end != '+' && *end != '-')
            Lexer::fail_at(t.line, t.col, "malformed complex literal '" + s + "'");
        const char* p2 = end;
        double im = std::strtod(p2, &end);
        if (end == p2 || *end != 'i' || *(end + 1) != '\0')
            Lexer::fail_at(t.line, t.col,
                           "malformed complex literal '" + s + "' (use a+bi with an 'i' suffix)");
        return {re, im};
    }

    double parse_real() {
        Token t = cur_;
        Cx z = parse_complex();
        if (z.imag() != 0.0)
            Lexer::fail_at(t.line, t.col, "expected a real number");
        return z.real();
    }

    long long parse_int() {
        Token t = cur_;
        double v = parse_real();
        long long n = static_cast<long long>(v);
        if (static_cast<double>(n) != v || n <= 0)
            Lexer::fail_at(t.line, t.col, "expected a positive integer");
        return n;
    }

    void advance() { cur_ = lex_.next(); }
    bool is_punct(const char* p) const { return cur_.kind == Token::Punct && cur_.text == p; }
    void expect_punct(const char* p) {
        if (!is_punct(p))
            Lexer::fail_at(cur_.line, cur_.col,
                           "expected '" + std::string(p) + "', got '" + cur_.text + "'");
        advance();
    }
    void expect_ident(const char* name) {
        if (cur_.kind != Token::Ident || cur_.text != name)
            Lexer::fail_at(cur_.line, cur_.col,
                           "expected '" + std::string(name) + "', got '" + cur_.text + "'");
        advance();
    }
    std::string expect_any_ident() {
        if (cur_.kind != Token::Ident)
            Lexer::fail_at(cur_.line, cur_.col, "expected an identifier, got '" + cur_.text + "'");
        std::string s = cur_.text;
        advance();
        return s;
    }

    Lexer lex_;
    Token cur_;
};

} // namespace

ValidatedModel parse_model_document(const std::string& text) {
    Parser p(text);
    return p.parse();
}

ValidatedModel load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot open model file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_model_document(ss.str());
}

} // namespace prodspec
