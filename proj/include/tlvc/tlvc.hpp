#pragma once

#include "tlvc/dvg.hpp"
#include "tlvc/error.hpp"
#include "tlvc/log.hpp"
#include "tlvc/logic.hpp"
#include "tlvc/mdp.hpp"
#include "tlvc/oracle.hpp"
#include "tlvc/parser.hpp"
#include "tlvc/policy.hpp"
#include "tlvc/rewrite.hpp"
#include "tlvc/solver.hpp"
