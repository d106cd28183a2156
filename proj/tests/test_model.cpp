#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>

#include "rsmfc/errors.hpp"
#include "rsmfc/model.hpp"

using namespace rsmfc;

TEST_CASE("lq_coefficients evaluates the LQ model") {
    SUBCASE("a = 0 kills the state term in the drift") {
        LqParams p;
        p.a = 0.0;
        p.b = 1.0;
        p.mu = 0.0;
        const CoefficientSet c = lq_coefficients(p);
        CHECK(c.b(0.0, 2.0, 5.0, 3.0) == 3.0);
    }
    SUBCASE("terminal cost") {
        LqParams p;
        const CoefficientSet c = lq_coefficients(p); // mu = 0
        CHECK(c.h(4.0, 7.0) == 8.0);

        LqParams pm = p;
        pm.mu = 2.0;
        const CoefficientSet cm = lq_coefficients(pm);
        CHECK(cm.h_y(4.0, 7.0) == 2.0);
        CHECK(cm.h(4.0, 7.0) == 8.0 + 2.0 * 7.0);
    }
    SUBCASE("mu = 0 makes the model mean-field free") {
        LqParams p;
        const CoefficientSet c = lq_coefficients(p);
        for (double x : {-3.0, 0.0, 2.5}) {
            CHECK(c.h_y(x, 1.0) == 0.0);
            CHECK(c.b_y(0.1, x, 1.0, 2.0) == 0.0);
            CHECK(c.sigma_y(0.1, x, 1.0, 2.0) == 0.0);
            CHECK(c.f_y(0.1, x, 1.0, 2.0) == 0.0);
        }
    }
    SUBCASE("second x-derivatives vanish, h_xx == 1") {
        LqParams p;
        p.a = 0.7;
        p.sigma = 0.4;
        const CoefficientSet c = lq_coefficients(p);
        CHECK(c.b_xx(0.2, 1.0, 0.5, -1.0) == 0.0);
        CHECK(c.sigma_xx(0.2, 1.0, 0.5, -1.0) == 0.0);
        CHECK(c.f_xx(0.2, 1.0, 0.5, -1.0) == 0.0);
        CHECK(c.h_xx(1.0, 0.5) == 1.0);
    }
    SUBCASE("invalid params") {
        LqParams p;
        p.sigma = -1.0;
        CHECK_THROWS_AS(lq_coefficients(p), std::invalid_argument);
        LqParams p2;
        p2.t_end = 0.0;
        CHECK_THROWS_AS(lq_coefficients(p2), std::invalid_argument);
    }
}

TEST_CASE("check_derivatives") {
    LqParams p;
    p.a = 0.5;
    p.b = 1.0;
    p.sigma = 0.3;
    p.mu = 1.5;
    CoefficientSet c = lq_coefficients(p);

    SUBCASE("LQ partials agree with finite differences") {
        const DerivativeReport rep = check_derivatives(c, 100, 7);
        CHECK(rep.max_discrepancy < 1e-6);
    }

    SUBCASE("a seeded fault is detected") {
        c.f_x = [](double, double x, double, double) { return 0.3 * x; }; // wrong: f_x == 0
        const DerivativeReport rep = check_derivatives(c, 100, 7);
        double f_x_err = 0.0;
        for (const auto& e : rep.entries) {
            if (e.name == "f_x") f_x_err = e.max_abs_error;
        }
        CHECK(f_x_err > 1e-2);
    }

    SUBCASE("sample count precondition") {
        CHECK_THROWS_AS(check_derivatives(c, 0, 7), std::invalid_argument);
    }

    SUBCASE("non-finite coefficient is reported with its name") {
        c.b = [](double, double x, double, double) { return x / 0.0 * 0.0; }; // NaN
        try {
            check_derivatives(c, 10, 7);
            FAIL("expected evaluation_error");
        } catch (const evaluation_error& e) {
            CHECK(std::string(e.what()).find("b_x") != std::string::npos);
        }
    }
}
